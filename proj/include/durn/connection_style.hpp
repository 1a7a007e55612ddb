#pragma once

#include <string>

namespace durn {

/// Residual wiring of a stack of blocks:
///   a: plain residual blocks, x + h(x)
///   b: paired module under one residual, x + g(f(x))
///   c: two independent residuals, x' = x + f(x), x'' = x' + g(x')
///   d: dual residual connection (second carrier stream between blocks)
enum class ConnectionStyle { a, b, c, d };

std::string to_string(ConnectionStyle style);
/// Accepts "a".."d"; throws ConfigError otherwise.
ConnectionStyle parse_style(const std::string& text);

}  // namespace durn

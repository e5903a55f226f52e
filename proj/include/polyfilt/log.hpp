#pragma once

#include <string_view>
#include <utility>

#include <spdlog/spdlog.h>

namespace polyfilt::log {

/// Reads POLYFILT_LOG (trace, debug, info, warn, error, off) once and configures the
/// library logger, which writes to stderr. Safe to call repeatedly.
void init();

spdlog::logger& logger();

template <typename... Args>
void trace(fmt::format_string<Args...> fmt, Args&&... args)
{
    logger().trace(fmt, std::forward<Args>(args)...);
}

template <typename... Args>
void debug(fmt::format_string<Args...> fmt, Args&&... args)
{
    logger().debug(fmt, std::forward<Args>(args)...);
}

template <typename... Args>
void info(fmt::format_string<Args...> fmt, Args&&... args)
{
    logger().info(fmt, std::forward<Args>(args)...);
}

template <typename... Args>
void warn(fmt::format_string<Args...> fmt, Args&&... args)
{
    logger().warn(fmt, std::forward<Args>(args)...);
}

template <typename... Args>
void error(fmt::format_string<Args...> fmt, Args&&... args)
{
    logger().error(fmt, std::forward<Args>(args)...);
}

}  // namespace polyfilt::log

#include "polyfilt/log.hpp"

#include <cstdlib>
#include <memory>
#include <mutex>

#include <spdlog/sinks/stdout_color_sinks.h>

namespace polyfilt::log {

namespace {

std::shared_ptr<spdlog::logger> make_logger()
{
    auto lg = spdlog::stderr_color_mt("polyfilt");
    lg->set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
    spdlog::level::level_enum level = spdlog::level::warn;
    if (const char* env = std::getenv("POLYFILT_LOG"); env != nullptr && *env != '\0')
    {
        level = spdlog::level::from_str(env);
        // from_str maps unknown names to off; keep warnings visible instead.
        if (level == spdlog::level::off && std::string_view(env) != "off")
        {
            level = spdlog::level::warn;
        }
    }
    lg->set_level(level);
    return lg;
}

}  // namespace

void init()
{
    (void)logger();
}

spdlog::logger& logger()
{
    static std::shared_ptr<spdlog::logger> instance = make_logger();
    return *instance;
}

}  // namespace polyfilt::log

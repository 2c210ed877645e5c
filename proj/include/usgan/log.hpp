#pragma once

#include <cstdlib>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace usgan {

/// Routes spdlog to stderr at the level named by USGAN_LOG
/// (error, info or debug; default info).
inline void configure_logging() {
  auto logger = spdlog::stderr_color_mt("usgan");
  spdlog::set_default_logger(logger);
  const char* env = std::getenv("USGAN_LOG");
  const std::string level = env ? env : "info";
  if (level == "error") spdlog::set_level(spdlog::level::err);
  else if (level == "debug") spdlog::set_level(spdlog::level::debug);
  else spdlog::set_level(spdlog::level::info);
  spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
}

}  // namespace usgan

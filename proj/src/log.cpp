#include "acseq/log.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>

#include <cstdlib>
#include <string>

namespace acseq {

void init_logging() {
  auto logger = spdlog::stderr_color_mt("acseq");
  const char* env = std::getenv("ACSEQ_LOG");
  const std::string level = env ? env : "info";
  logger->set_level(level == "debug" ? spdlog::level::debug : spdlog::level::info);
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
}

}  // namespace acseq

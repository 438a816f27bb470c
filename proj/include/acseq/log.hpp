#pragma once

#include <spdlog/spdlog.h>

namespace acseq {

/// Configures the default spdlog logger (stderr) from ACSEQ_LOG=debug|info.
void init_logging();

}  // namespace acseq

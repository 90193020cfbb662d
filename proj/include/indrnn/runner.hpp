#pragma once

#include <string>

#include "indrnn/config.hpp"

namespace indrnn {

// Version string stamped at configure time (git describe), "unknown" when
// built outside a checkout.
const char* build_id();

// Executes cfg.task and writes its artifacts (manifest, metrics.csv, report,
// checkpoints, plots) under cfg.out_dir. `resume` names a checkpoint to
// continue from. Returns the process exit code: 0 on success, 1 on a failed
// check, 2 when training aborted on a non-finite loss.
int run_task(const RunConfig& cfg, const std::string& resume = "");

}  // namespace indrnn

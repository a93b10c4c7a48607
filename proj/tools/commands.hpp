#pragma once

#include <string>

#include "casdet/config.hpp"

namespace casdet::cli {

// Each command returns 0 on success and throws casdet::Error otherwise.
int cmd_prep(const PipelineConfig& cfg);
int cmd_synth(const PipelineConfig& cfg);
int cmd_train(const PipelineConfig& cfg, const std::string& system);
int cmd_infer(const PipelineConfig& cfg, const std::string& mode);
int cmd_eval(const PipelineConfig& cfg);

}  // namespace casdet::cli

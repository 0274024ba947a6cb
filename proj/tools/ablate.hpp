#pragma once

#include <string>

#include "stereo/config.hpp"

namespace stereo::tools {

// Runs one comparison grid over a held-out dataset and writes a CSV table:
//   correlation: volume construction variants (all-pairs vs local windows)
//   cascades:    1-3 refinement levels at equal total iterations
//   stacked:     1-3 inference stages
//   disturb:     input degradations applied at evaluation time
int run_ablate(const RunConfig& cfg, const std::string& checkpoint_path, const std::string& suite,
               const std::string& data_dir, const std::string& out_csv);

}  // namespace stereo::tools

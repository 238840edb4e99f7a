#pragma once

#include <string>
#include <utility>
#include <vector>

namespace acceptance {

// Finite-difference check of the full pipeline in double precision, one entry per
// loss: (name, worst relative error).
std::vector<std::pair<std::string, double>> pipeline_gradient_errors();

}  // namespace acceptance

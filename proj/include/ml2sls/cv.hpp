#pragma once

#include <vector>

#include "ml2sls/rng.hpp"

namespace ml2sls {

/// Near-equal random partition into k folds; returns the fold id of each
/// index. Deterministic given the stream.
std::vector<int> kfold_split(int n, int k, Substream& stream);

}  // namespace ml2sls

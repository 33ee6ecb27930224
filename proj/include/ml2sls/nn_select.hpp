#pragma once

#include <string>
#include <vector>

#include "ml2sls/classical.hpp"
#include "ml2sls/dgp.hpp"
#include "ml2sls/mlp.hpp"
#include "ml2sls/rng.hpp"

namespace ml2sls {

enum class NnFamily { ShallowWide, NarrowDeep, Unrestricted };

std::string family_name(NnFamily family);
NnFamily family_from_name(const std::string& name);

/// Search spaces. Every family includes the depth-0 direct map.
/// ShallowWide: depth 1, widths {16,32,64,256,512}; NarrowDeep: depths
/// {2..5}, widths {16,32,64}; Unrestricted: union of both. Dropout is 0.1 or
/// 0.2 on every hidden configuration.
std::vector<MlpArch> nn_search_space(NnFamily family);

/// Campaign-level selection table: each configuration's mean out-of-sample
/// MSE over 125 folds (25 datasets x 5 folds), its within-family z-score,
/// and the normalized upper-tail-CDF selection probability.
struct PrePhaseTable {
  NnFamily family = NnFamily::Unrestricted;
  std::vector<MlpArch> configs;
  Vec mean_mse;
  Vec z_mse;
  Vec p_chosen;
};

/// z-scores standardize per-config mean MSEs within the family (sample SD
/// across configs); p_chosen_i = (1 - Phi(z_i)) / sum_j (1 - Phi(z_j)). All
/// configs tied at the same MSE yields a uniform table.
PrePhaseTable make_pre_phase_table(NnFamily family, const std::vector<MlpArch>& configs,
                                   const Vec& mean_mse);

/// Builds the table from the campaign's first datasets. Streams for fold
/// splits and per-fit randomness are derived from (master_seed, dataset
/// index) so the table is independent of worker scheduling.
PrePhaseTable nn_pre_phase(const std::vector<SimulatedDataset>& datasets,
                           NnFamily family, std::uint64_t master_seed, int workers);

/// Per-iteration neural first stage: draw two candidate configurations
/// without replacement by p_chosen, cross-validate both on this dataset
/// (5 folds), train the winner (lower out-of-sample MSE; ties go to the
/// smaller parameter count) on the full sample.
FirstStageFit nn_select_and_fit(const SimulatedDataset& ds, const PrePhaseTable& table,
                                Substream& pick_stream, Substream& cv_stream,
                                Substream& init_stream, Substream& shuffle_stream);

EstimateRecord nn_2sls(const SimulatedDataset& ds, const PrePhaseTable& table,
                       Substream& pick_stream, Substream& cv_stream,
                       Substream& init_stream, Substream& shuffle_stream);

}  // namespace ml2sls

#pragma once

#include <map>
#include <string>
#include <vector>

#include "ml2sls/montecarlo.hpp"

namespace ml2sls {

using KvMap = std::map<std::string, std::string>;

/// Flat key=value file: '#' comments, blank lines ignored. Unknown keys are
/// rejected later, at merge time.
KvMap read_kv_file(const std::string& path);

/// Builds a campaign configuration from a config file's pairs overlaid with
/// CLI flag pairs (flags win; each override is reported through `log`).
/// Unknown keys are hard errors; missing required keys (dgp, seed) are
/// reported together in one message.
CampaignConfig build_campaign_config(const KvMap& file_kv, const KvMap& flag_kv,
                                     std::vector<std::string>* log = nullptr);

/// Config echo used in the manifest and for reproducibility comparisons.
KvMap config_echo(const CampaignConfig& config);

std::vector<std::string> split_list(const std::string& csv);

}  // namespace ml2sls

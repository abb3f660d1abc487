#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fscert/vec.hpp"

namespace fscert {

// Synthetic labeled dataset drawn from a Gaussian mixture. The generator
// spec is kept alongside the samples so runs can be reproduced exactly.
struct MixtureSpec {
  int class_count = 4;
  int per_class = 200;
  int d_in = 16;
  double separation = 6.0;  // minimum pairwise distance between class means
  double cluster_std = 1.0;
  std::uint64_t seed = 1;
};

struct LabeledDataset {
  std::vector<Vec> inputs;
  std::vector<int> labels;
  int class_count = 0;
  MixtureSpec spec;

  std::size_t size() const { return inputs.size(); }
};

// K Gaussian clusters; means are standard normal draws rescaled so the
// minimum pairwise distance equals `separation`. Deterministic in the seed.
LabeledDataset gen_mixture_dataset(const MixtureSpec& spec);

// Deterministic split: the first ceil(train_fraction * n) samples of every
// class go to train, the rest to holdout.
std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& data,
                                                        double train_fraction);

// One JSON record per line: {"label":int,"values":[...]}.
void save_dataset(const LabeledDataset& data, const std::string& path);
LabeledDataset load_dataset(const std::string& path);

}  // namespace fscert

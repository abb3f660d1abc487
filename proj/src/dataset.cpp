#include "fscert/dataset.hpp"

#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "fscert/rng.hpp"

namespace fscert {

LabeledDataset gen_mixture_dataset(const MixtureSpec& spec) {
  if (spec.class_count < 2) throw std::invalid_argument("gen_mixture_dataset: K must be >= 2");
  if (spec.per_class < 1) throw std::invalid_argument("gen_mixture_dataset: per_class must be >= 1");
  if (spec.d_in < 1) throw std::invalid_argument("gen_mixture_dataset: d_in must be >= 1");
  if (!(spec.separation > 0.0))
    throw std::invalid_argument("gen_mixture_dataset: separation must be > 0");
  if (!(spec.cluster_std > 0.0))
    throw std::invalid_argument("gen_mixture_dataset: cluster_std must be > 0");

  const int k = spec.class_count;
  std::vector<Vec> means(k, Vec(spec.d_in));
  for (int c = 0; c < k; ++c) {
    Rng rng(derive_seed(spec.seed, stream::kDataset, static_cast<std::uint64_t>(c)));
    rng.fill_normal(means[c]);
  }

  // Rescale so the closest pair of means sits exactly at `separation`.
  double min_dist = std::numeric_limits<double>::infinity();
  for (int i = 0; i < k; ++i)
    for (int j = i + 1; j < k; ++j) min_dist = std::min(min_dist, norm2(sub(means[i], means[j])));
  if (!(min_dist > 0.0))
    throw std::runtime_error("gen_mixture_dataset: coincident class means; change the seed");
  const double scale = spec.separation / min_dist;
  for (auto& m : means)
    for (double& v : m) v *= scale;

  LabeledDataset data;
  data.class_count = k;
  data.spec = spec;
  data.inputs.reserve(static_cast<std::size_t>(k) * spec.per_class);
  data.labels.reserve(static_cast<std::size_t>(k) * spec.per_class);
  for (int c = 0; c < k; ++c) {
    for (int s = 0; s < spec.per_class; ++s) {
      Rng rng(derive_seed(spec.seed, stream::kDataset ^ 0xffULL,
                          static_cast<std::uint64_t>(c) * 1000003ULL + s));
      Vec x(spec.d_in);
      rng.fill_normal(x, spec.cluster_std);
      for (int d = 0; d < spec.d_in; ++d) x[d] += means[c][d];
      data.inputs.push_back(std::move(x));
      data.labels.push_back(c);
    }
  }
  return data;
}

std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& data,
                                                        double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0))
    throw std::invalid_argument("split_dataset: train_fraction must lie in (0, 1]");
  LabeledDataset train, holdout;
  train.class_count = holdout.class_count = data.class_count;
  train.spec = holdout.spec = data.spec;

  std::vector<long> seen(data.class_count, 0);
  std::vector<long> total(data.class_count, 0);
  for (int label : data.labels) ++total[label];
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int label = data.labels[i];
    const long cutoff =
        static_cast<long>(std::ceil(train_fraction * static_cast<double>(total[label])));
    auto& dst = seen[label]++ < cutoff ? train : holdout;
    dst.inputs.push_back(data.inputs[i]);
    dst.labels.push_back(label);
  }
  return {std::move(train), std::move(holdout)};
}

void save_dataset(const LabeledDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_dataset: cannot open " + path);
  for (std::size_t i = 0; i < data.size(); ++i) {
    nlohmann::json rec;
    rec["label"] = data.labels[i];
    rec["values"] = data.inputs[i];
    out << rec.dump() << "\n";
  }
  if (!out) throw std::runtime_error("save_dataset: write failed for " + path);
}

LabeledDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
  LabeledDataset data;
  std::string line;
  int max_label = -1;
  std::size_t expect_dim = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json rec = nlohmann::json::parse(line);
    Vec x = rec.at("values").get<Vec>();
    const int label = rec.at("label").get<int>();
    if (label < 0) throw std::runtime_error("load_dataset: negative label");
    if (!all_finite(x)) throw std::runtime_error("load_dataset: non-finite input values");
    if (expect_dim == 0) expect_dim = x.size();
    if (x.size() != expect_dim) throw std::runtime_error("load_dataset: inconsistent dimensions");
    max_label = std::max(max_label, label);
    data.inputs.push_back(std::move(x));
    data.labels.push_back(label);
  }
  if (data.inputs.empty()) throw std::runtime_error("load_dataset: empty dataset in " + path);
  data.class_count = max_label + 1;
  data.spec.class_count = data.class_count;
  data.spec.d_in = static_cast<int>(expect_dim);
  return data;
}

}  // namespace fscert

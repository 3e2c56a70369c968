#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "aesm2/rng.hpp"

namespace aesm2 {

struct FeatureDef {
  std::string name;
  int vocab = 0;
};

struct GroupDef {
  std::string name;
  std::vector<FeatureDef> features;
};

struct LevelDef {
  std::string name;
  int cardinality = 0;
};

struct DatasetSchema {
  std::vector<GroupDef> groups;
  std::vector<LevelDef> scenario_levels;
  std::vector<std::string> tasks{"ctr", "ctcvr"};

  // Features flattened in declared group order.
  int feature_count() const;
  std::vector<FeatureDef> flat_features() const;
  int level_count() const { return static_cast<int>(scenario_levels.size()); }
  int scenario_count() const;  // product of level cardinalities

  std::string to_json() const;
  static DatasetSchema from_json(const std::string& text);
};

// One training example. `features` follows the schema's flattened feature
// order; `scenario_path` has one id per scenario level. conversion == 1
// implies click == 1.
struct Instance {
  std::vector<int> features;
  std::vector<int> scenario_path;
  int click = 0;
  int conversion = 0;

  bool operator==(const Instance&) const = default;
};

struct Dataset {
  DatasetSchema schema;
  std::vector<Instance> instances;

  int size() const { return static_cast<int>(instances.size()); }
};

// Flat leaf-scenario index of an instance (row-major over levels).
int scenario_index(const DatasetSchema& schema, const Instance& inst);
std::string scenario_label(const DatasetSchema& schema, int index);

void validate_instance(const DatasetSchema& schema, const Instance& inst);

// Synthetic generator. Each leaf scenario (channel c, domain d, ...) gets a
// ground-truth logit vector mixing a per-channel component, a per-domain
// component and an own component:
//   w = alpha * w_channel + beta * w_domain + (1 - alpha - beta) * w_own
// normalized to keep the logit variance independent of alpha/beta. Click
// probability is sigmoid(w_ctr . phi(features) + b); conversions are sampled
// only for clicked instances from an analogous CVR model. The intercept b is
// calibrated per scenario so the empirical rate matches the configured base.
struct SyntheticSpec {
  DatasetSchema schema;
  int latent_dim = 4;         // ground-truth embedding dims per feature
  double alpha = 0.3;         // channel-level sharing
  double beta = 0.3;          // domain-level sharing
  bool identical_scenarios = false;
  std::vector<double> shares;    // per leaf scenario, sums to 1
  std::vector<double> ctr_base;  // per leaf scenario
  std::vector<double> cvr_base;  // conversion rate given click
  double signal_ctr = 1.8;    // logit standard deviation targets
  double signal_cvr = 1.5;
  // Fraction of the logit variance carried by pairwise feature-latent
  // products (scenario-weighted interactions) instead of the linear part.
  double interaction_share = 0.5;
  std::uint64_t latent_seed = 99;

  void validate() const;
  std::string to_json() const;
  static SyntheticSpec from_json(const std::string& text);
};

// Two-level (channel x domain) default mirroring the imbalanced shares of a
// four-scenario production workload.
SyntheticSpec default_synthetic_spec();

// Deterministic in (spec, seed); the latent ground truth depends only on
// spec.latent_seed so different splits share one ground truth.
Dataset generate_synthetic(const SyntheticSpec& spec, int count,
                           std::uint64_t seed);

// Same sample path, additionally reporting the generator's true
// probabilities per instance (for ceiling analyses).
Dataset generate_synthetic_with_scores(const SyntheticSpec& spec, int count,
                                       std::uint64_t seed,
                                       std::vector<double>* p_click,
                                       std::vector<double>* p_ctcvr);

void write_csv(const std::string& path, const Dataset& dataset);
Dataset load_csv(const std::string& path, const DatasetSchema& schema);

// Columnar view of a batch of instances.
struct Batch {
  int size = 0;
  std::vector<std::vector<int>> feature_ids;   // [feature][b]
  std::vector<std::vector<int>> scenario_ids;  // [level][b]
  std::vector<double> click;
  std::vector<double> conversion;
  std::vector<int> scenario;  // leaf index per instance
};

Batch make_batch(const DatasetSchema& schema, const std::vector<Instance>& all,
                 const std::vector<int>& indices);

// Deterministic shuffled batching; the last partial batch is emitted.
class BatchIterator {
 public:
  BatchIterator(const Dataset& dataset, int batch_size,
                std::uint64_t shuffle_seed, bool shuffle = true);
  bool next(Batch& out);
  void reset();
  int batch_count() const;

 private:
  const Dataset* dataset_;
  int batch_size_;
  std::vector<int> order_;
  std::size_t cursor_ = 0;
};

}  // namespace aesm2

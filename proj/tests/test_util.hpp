#pragma once

#include <vector>

#include "aesm2/config.hpp"
#include "aesm2/data.hpp"
#include "aesm2/model.hpp"
#include "aesm2/rng.hpp"
#include "aesm2/tensor.hpp"

namespace aesm2::testutil {

inline DatasetSchema tiny_schema() {
  DatasetSchema s;
  s.groups = {{"g", {{"f0", 8}, {"f1", 8}}}};
  s.scenario_levels = {{"channel", 2}, {"domain", 2}};
  return s;
}

inline ModelConfig tiny_model_config() {
  ModelConfig c;
  c.embed_dim = 4;
  c.expert_dim = 8;
  c.tower_hidden = 8;
  c.scenario_experts = 3;
  c.task_experts = 3;
  c.task_layer_count = 2;
  c.k_specific = 1;
  c.k_shared = 1;
  c.noise_scale = 0.01;
  c.static_specific_per_branch = 1;
  c.static_shared = 1;
  return c;
}

inline SyntheticSpec tiny_spec() {
  SyntheticSpec spec = default_synthetic_spec();
  spec.schema = tiny_schema();
  spec.shares = {0.25, 0.25, 0.25, 0.25};
  spec.ctr_base = {0.3, 0.3, 0.3, 0.3};
  spec.cvr_base = {0.2, 0.2, 0.2, 0.2};
  return spec;
}

inline Instance random_instance(const DatasetSchema& schema, RandomSource& rng) {
  Instance inst;
  for (const auto& f : schema.flat_features())
    inst.features.push_back(rng.uniform_int(f.vocab));
  for (const auto& l : schema.scenario_levels)
    inst.scenario_path.push_back(rng.uniform_int(l.cardinality));
  inst.click = rng.uniform() < 0.4 ? 1 : 0;
  inst.conversion = inst.click == 1 && rng.uniform() < 0.3 ? 1 : 0;
  return inst;
}

inline Tensor random_tensor(RandomSource& rng, std::vector<int> shape,
                            double scale = 1.0) {
  Tensor t(shape);
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

}  // namespace aesm2::testutil

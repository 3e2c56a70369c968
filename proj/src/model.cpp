#include "aesm2/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "aesm2/error.hpp"

namespace aesm2 {

using nlohmann::json;

ModelKind parse_model_kind(const std::string& name) {
  if (name == "aesm2") return ModelKind::aesm2;
  if (name == "mmoe") return ModelKind::mmoe;
  if (name == "hard_sharing") return ModelKind::hard_sharing;
  if (name == "static_split") return ModelKind::static_split;
  throw ConfigError("unknown model kind '" + name + "'");
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::aesm2: return "aesm2";
    case ModelKind::mmoe: return "mmoe";
    case ModelKind::hard_sharing: return "hard_sharing";
    case ModelKind::static_split: return "static_split";
  }
  return "?";
}

std::string model_config_to_json(const ModelConfig& cfg) {
  json j;
  j["embed_dim"] = cfg.embed_dim;
  j["expert_dim"] = cfg.expert_dim;
  j["tower_hidden"] = cfg.tower_hidden;
  j["scenario_experts"] = cfg.scenario_experts;
  j["task_experts"] = cfg.task_experts;
  j["task_layer_count"] = cfg.task_layer_count;
  j["k_specific"] = cfg.k_specific;
  j["k_shared"] = cfg.k_shared;
  j["noise_scale"] = cfg.noise_scale;
  j["static_specific_per_branch"] = cfg.static_specific_per_branch;
  j["static_shared"] = cfg.static_shared;
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  const json j = json::parse(text);
  ModelConfig c;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("embed_dim", c.embed_dim);
  get("expert_dim", c.expert_dim);
  get("tower_hidden", c.tower_hidden);
  get("scenario_experts", c.scenario_experts);
  get("task_experts", c.task_experts);
  get("task_layer_count", c.task_layer_count);
  get("k_specific", c.k_specific);
  get("k_shared", c.k_shared);
  get("noise_scale", c.noise_scale);
  get("static_specific_per_branch", c.static_specific_per_branch);
  get("static_shared", c.static_shared);
  return c;
}

namespace {

Tensor xavier(RandomSource& rng, int out, int in) {
  const double a = std::sqrt(6.0 / (in + out));
  Tensor t = Tensor::zeros({out, in}, true);
  for (auto& v : t.values()) v = rng.uniform(-a, a);
  return t;
}

Tensor zeros_param(int n) { return Tensor::zeros({n}, true); }

Tensor embedding_table(RandomSource& rng, int vocab, int dim) {
  Tensor t = Tensor::zeros({vocab, dim}, true);
  for (auto& v : t.values()) v = rng.uniform(-0.01, 0.01);
  return t;
}

MoeLayer make_moe_layer(RandomSource& rng, int n_experts, int expert_in,
                        int expert_out, int n_gates, int gate_in) {
  MoeLayer layer;
  for (int i = 0; i < n_experts; ++i)
    layer.experts.push_back({xavier(rng, expert_out, expert_in), zeros_param(expert_out)});
  for (int j = 0; j < n_gates; ++j)
    layer.gates.push_back({xavier(rng, n_experts, gate_in), zeros_param(n_experts)});
  return layer;
}

Tower make_tower(RandomSource& rng, int in, int hidden) {
  return Tower{xavier(rng, hidden, in), zeros_param(hidden),
               xavier(rng, 1, hidden), zeros_param(1)};
}

Tensor tower_forward(Tape& tape, const Tower& t, const Tensor& z) {
  Tensor h = relu(tape, linear(tape, z, t.w1, t.b1));
  return linear(tape, h, t.w2, t.b2);
}

void push_tower_params(std::vector<NamedParam>& out, const std::string& prefix,
                       const Tower& t) {
  out.push_back({prefix + ".w1", t.w1, true});
  out.push_back({prefix + ".b1", t.b1, false});
  out.push_back({prefix + ".w2", t.w2, true});
  out.push_back({prefix + ".b2", t.b2, false});
}

void push_moe_params(std::vector<NamedParam>& out, const std::string& prefix,
                     const MoeLayer& layer) {
  for (std::size_t i = 0; i < layer.experts.size(); ++i) {
    out.push_back({prefix + ".expert" + std::to_string(i) + ".w",
                   layer.experts[i].w, true});
    out.push_back({prefix + ".expert" + std::to_string(i) + ".b",
                   layer.experts[i].b, false});
  }
  for (std::size_t j = 0; j < layer.gates.size(); ++j) {
    out.push_back({prefix + ".gate" + std::to_string(j) + ".w",
                   layer.gates[j].w, true});
    out.push_back({prefix + ".gate" + std::to_string(j) + ".b",
                   layer.gates[j].b, false});
  }
}

}  // namespace

std::vector<Tensor> expert_outputs(Tape& tape,
                                   const std::vector<ExpertParams>& experts,
                                   const Tensor& input) {
  std::vector<Tensor> out;
  out.reserve(experts.size());
  for (const auto& e : experts)
    out.push_back(relu(tape, linear(tape, input, e.w, e.b)));
  return out;
}

Tensor mmoe_forward(Tape& tape, const Tensor& input,
                    const std::vector<ExpertParams>& experts,
                    const Tensor& gate_logits) {
  if (experts.empty()) throw ConfigError("mmoe_forward: no experts");
  Tensor weights = softmax_rows(tape, gate_logits);
  return mixture(tape, expert_outputs(tape, experts, input), weights);
}

Tensor esmm_combine(Tape& tape, const Tensor& ctr, const Tensor& cvr) {
  return mul(tape, ctr, cvr);
}

AESM2Model::AESM2Model(ModelKind kind, const ModelConfig& cfg,
                       const DatasetSchema& schema, std::uint64_t init_seed)
    : kind_(kind), cfg_(cfg), schema_(schema) {
  if (kind == ModelKind::hard_sharing)
    throw ConfigError("hard_sharing is built by HardSharingModel");
  if (static_cast<int>(schema.tasks.size()) != 2)
    throw ConfigError("model expects exactly two tasks (CTR, CTCVR)");
  if (cfg.k_specific < 1 || cfg.k_specific > cfg.scenario_experts ||
      cfg.k_specific > cfg.task_experts || cfg.k_shared < 1 ||
      cfg.k_shared > cfg.scenario_experts || cfg.k_shared > cfg.task_experts)
    throw ConfigError("K values must lie in [1, n_experts]");
  if (cfg.noise_scale < 0.0) throw ConfigError("negative noise scale");

  RandomSource rng(mix_seed(init_seed));
  const auto feats = schema.flat_features();
  for (const auto& f : feats)
    feature_tables.push_back(embedding_table(rng, f.vocab, cfg.embed_dim));
  for (const auto& l : schema.scenario_levels)
    scenario_tables.push_back(embedding_table(rng, l.cardinality, cfg.embed_dim));
  task_table = embedding_table(rng, 2, cfg.embed_dim);

  const int x_dim = static_cast<int>(feats.size()) * cfg.embed_dim;
  const int L_s = schema.level_count();
  int in_dim = x_dim;
  for (int l = 0; l < L_s; ++l) {
    const int m = schema.scenario_levels[static_cast<std::size_t>(l)].cardinality;
    const int gate_in = in_dim + cfg.embed_dim * (l + 1);
    scenario_layers.push_back(make_moe_layer(rng, cfg.scenario_experts, in_dim,
                                             cfg.expert_dim, m, gate_in));
    in_dim = cfg.expert_dim;
  }
  for (int l = 0; l < cfg.task_layer_count; ++l) {
    const int gate_in = in_dim + cfg.embed_dim * L_s + cfg.embed_dim;
    task_layers.push_back(make_moe_layer(rng, cfg.task_experts, in_dim,
                                         cfg.expert_dim, 2, gate_in));
    in_dim = cfg.expert_dim;
  }
  towers.push_back(make_tower(rng, in_dim, cfg.tower_hidden));
  towers.push_back(make_tower(rng, in_dim, cfg.tower_hidden));

  if (kind == ModelKind::static_split) {
    const int pb = cfg.static_specific_per_branch;
    const int sh = cfg.static_shared;
    int max_branches = 2;  // task layers
    for (const auto& l : schema.scenario_levels)
      max_branches = std::max(max_branches, l.cardinality);
    if (pb < 0 || sh < 0 || pb + sh == 0)
      throw ConfigError("static_split: empty partition");
    if (max_branches * pb + sh > std::min(cfg.scenario_experts, cfg.task_experts))
      throw ConfigError("static_split: partition does not fit expert count");
  }

  rebuild_param_registry();
}

void AESM2Model::rebuild_param_registry() {
  params_.clear();
  const auto feats = schema_.flat_features();
  for (std::size_t f = 0; f < feature_tables.size(); ++f)
    params_.push_back({"embed.feat." + feats[f].name, feature_tables[f], false});
  for (std::size_t l = 0; l < scenario_tables.size(); ++l)
    params_.push_back({"embed.level." + schema_.scenario_levels[l].name,
                       scenario_tables[l], false});
  params_.push_back({"embed.task", task_table, false});
  for (std::size_t l = 0; l < scenario_layers.size(); ++l)
    push_moe_params(params_, "scen" + std::to_string(l), scenario_layers[l]);
  for (std::size_t l = 0; l < task_layers.size(); ++l)
    push_moe_params(params_, "task" + std::to_string(l), task_layers[l]);
  push_tower_params(params_, "tower.ctr", towers[0]);
  push_tower_params(params_, "tower.cvr", towers[1]);
}

std::vector<int> AESM2Model::static_active(int branch, int n) const {
  const int pb = cfg_.static_specific_per_branch;
  const int sh = cfg_.static_shared;
  std::vector<int> active;
  for (int i = branch * pb; i < (branch + 1) * pb; ++i) active.push_back(i);
  for (int i = n - sh; i < n; ++i) active.push_back(i);
  std::sort(active.begin(), active.end());
  active.erase(std::unique(active.begin(), active.end()), active.end());
  return active;
}

Embedded AESM2Model::embed(Tape& tape, const Batch& batch) {
  Embedded e;
  std::vector<Tensor> parts;
  const auto feats = schema_.flat_features();
  for (std::size_t f = 0; f < feature_tables.size(); ++f) {
    try {
      parts.push_back(gather_rows(tape, feature_tables[f], batch.feature_ids[f]));
    } catch (const DataError& err) {
      throw DataError("feature '" + feats[f].name + "': " + err.what());
    }
  }
  e.x = concat(tape, parts, 1);
  for (std::size_t l = 0; l < scenario_tables.size(); ++l)
    e.s_path.push_back(gather_rows(tape, scenario_tables[l], batch.scenario_ids[l]));
  for (int k = 0; k < 2; ++k)
    e.t_all.push_back(
        gather_rows(tape, task_table, std::vector<int>(static_cast<std::size_t>(batch.size), k)));
  return e;
}

namespace {

// One MoE layer worth of gating for one active slot: mask (unless dense),
// softmax, mix. Returns the mixed output and stores the weights.
Tensor combine_slot(Tape& tape, const std::vector<Tensor>& eouts,
                    const Tensor& own_logits,
                    const std::vector<std::vector<int>>* active,
                    Tensor* weights_out) {
  Tensor weights;
  if (active == nullptr) {
    weights = softmax_rows(tape, own_logits);
  } else {
    Tensor masked = mask_columns(tape, own_logits, *active, kGateMaskSentinel);
    weights = softmax_rows(tape, masked);
  }
  if (weights_out) *weights_out = weights;
  return mixture(tape, eouts, weights);
}

}  // namespace

TaskPredictions AESM2Model::forward(Tape& tape, const Batch& batch,
                                    bool training, RandomSource& rng,
                                    ForwardTrace* trace) {
  const int B = batch.size;
  if (static_cast<int>(batch.scenario_ids.size()) != schema_.level_count())
    throw ContractError("batch scenario path length does not match schema");
  if (trace) {
    trace->batch = B;
    trace->layers.clear();
  }
  Embedded emb = embed(tape, batch);

  const bool add_noise = training && cfg_.noise_scale > 0.0;

  // Scenario stack.
  Tensor z = emb.x;
  std::vector<Tensor> s_prefix;
  for (std::size_t l = 0; l < scenario_layers.size(); ++l) {
    MoeLayer& layer = scenario_layers[l];
    const int n = static_cast<int>(layer.experts.size());
    const int m = static_cast<int>(layer.gates.size());
    s_prefix.push_back(emb.s_path[l]);

    std::vector<Tensor> gate_in_parts{z};
    gate_in_parts.insert(gate_in_parts.end(), s_prefix.begin(), s_prefix.end());
    Tensor gate_in = concat(tape, gate_in_parts, 1);
    std::vector<Tensor> logits;
    logits.reserve(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) {
      Tensor lj = linear(tape, gate_in, layer.gates[static_cast<std::size_t>(j)].w,
                         layer.gates[static_cast<std::size_t>(j)].b);
      if (add_noise)
        lj = add_gaussian_noise(tape, lj, cfg_.noise_scale * n, rng);
      logits.push_back(lj);
    }
    Tensor own = select_rows_by_branch(tape, logits, batch.scenario_ids[l]);
    std::vector<Tensor> eouts = expert_outputs(tape, layer.experts, z);

    LayerTrace lt;
    lt.n = n;
    lt.m = m;
    lt.task_level = false;
    if (kind_ == ModelKind::mmoe) {
      Tensor w;
      z = combine_slot(tape, eouts, own, nullptr, &w);
      lt.mixture_weights.push_back(w);
    } else {
      std::vector<std::vector<int>> active(static_cast<std::size_t>(B));
      std::vector<SelectionResult> sels(static_cast<std::size_t>(B));
      if (kind_ == ModelKind::static_split) {
        for (int b = 0; b < B; ++b) {
          const int j = batch.scenario_ids[l][static_cast<std::size_t>(b)];
          SelectionResult s;
          s.branch = j;
          s.active = static_active(j, n);
          for (int i = j * cfg_.static_specific_per_branch;
               i < (j + 1) * cfg_.static_specific_per_branch; ++i)
            s.specific.push_back(i);
          for (int i = n - cfg_.static_shared; i < n; ++i) s.shared.push_back(i);
          active[static_cast<std::size_t>(b)] = s.active;
          sels[static_cast<std::size_t>(b)] = std::move(s);
        }
      } else {
        Tensor g_raw = interleave_columns(tape, logits);
        lt.g_tilde = softmax_groups(tape, g_raw, m);
        for (int b = 0; b < B; ++b) {
          const int j = batch.scenario_ids[l][static_cast<std::size_t>(b)];
          sels[static_cast<std::size_t>(b)] = select_experts(
              lt.g_tilde.data() + static_cast<std::size_t>(b) * n * m, n, m, j,
              cfg_.k_specific, cfg_.k_shared);
          active[static_cast<std::size_t>(b)] = sels[static_cast<std::size_t>(b)].active;
        }
      }
      Tensor w;
      z = combine_slot(tape, eouts, own, &active, &w);
      lt.mixture_weights.push_back(w);
      lt.selections.push_back(std::move(sels));
    }
    if (trace) trace->layers.push_back(std::move(lt));
  }

  // Task stack: every instance flows through every task branch.
  Tensor s_all;
  if (!emb.s_path.empty()) s_all = concat(tape, emb.s_path, 1);
  std::vector<Tensor> zk{z, z};
  for (std::size_t l = 0; l < task_layers.size(); ++l) {
    MoeLayer& layer = task_layers[l];
    const int n = static_cast<int>(layer.experts.size());
    const int m = static_cast<int>(layer.gates.size());

    std::vector<Tensor> logits;
    for (int k = 0; k < m; ++k) {
      std::vector<Tensor> parts{zk[static_cast<std::size_t>(k)]};
      if (s_all.defined()) parts.push_back(s_all);
      parts.push_back(emb.t_all[static_cast<std::size_t>(k)]);
      Tensor gate_in = concat(tape, parts, 1);
      Tensor lk = linear(tape, gate_in, layer.gates[static_cast<std::size_t>(k)].w,
                         layer.gates[static_cast<std::size_t>(k)].b);
      if (add_noise)
        lk = add_gaussian_noise(tape, lk, cfg_.noise_scale * n, rng);
      logits.push_back(lk);
    }

    // The first task layer sees one common input; later layers run the shared
    // expert set on each task's own input.
    const bool common_input = zk[0].same_storage(zk[1]);
    std::vector<Tensor> eouts_common;
    if (common_input) eouts_common = expert_outputs(tape, layer.experts, zk[0]);

    LayerTrace lt;
    lt.n = n;
    lt.m = m;
    lt.task_level = true;
    std::vector<Tensor> new_zk(2);
    if (kind_ == ModelKind::mmoe) {
      for (int k = 0; k < m; ++k) {
        std::vector<Tensor> eouts =
            common_input ? eouts_common
                         : expert_outputs(tape, layer.experts, zk[static_cast<std::size_t>(k)]);
        Tensor w;
        new_zk[static_cast<std::size_t>(k)] =
            combine_slot(tape, eouts, logits[static_cast<std::size_t>(k)], nullptr, &w);
        lt.mixture_weights.push_back(w);
      }
    } else {
      if (kind_ == ModelKind::aesm2) {
        Tensor g_raw = interleave_columns(tape, logits);
        lt.g_tilde = softmax_groups(tape, g_raw, m);
      }
      for (int k = 0; k < m; ++k) {
        std::vector<std::vector<int>> active(static_cast<std::size_t>(B));
        std::vector<SelectionResult> sels(static_cast<std::size_t>(B));
        for (int b = 0; b < B; ++b) {
          if (kind_ == ModelKind::static_split) {
            SelectionResult s;
            s.branch = k;
            s.active = static_active(k, n);
            for (int i = k * cfg_.static_specific_per_branch;
                 i < (k + 1) * cfg_.static_specific_per_branch; ++i)
              s.specific.push_back(i);
            for (int i = n - cfg_.static_shared; i < n; ++i) s.shared.push_back(i);
            sels[static_cast<std::size_t>(b)] = std::move(s);
          } else {
            sels[static_cast<std::size_t>(b)] = select_experts(
                lt.g_tilde.data() + static_cast<std::size_t>(b) * n * m, n, m, k,
                cfg_.k_specific, cfg_.k_shared);
          }
          active[static_cast<std::size_t>(b)] = sels[static_cast<std::size_t>(b)].active;
        }
        std::vector<Tensor> eouts =
            common_input ? eouts_common
                         : expert_outputs(tape, layer.experts, zk[static_cast<std::size_t>(k)]);
        Tensor w;
        new_zk[static_cast<std::size_t>(k)] =
            combine_slot(tape, eouts, logits[static_cast<std::size_t>(k)], &active, &w);
        lt.mixture_weights.push_back(w);
        lt.selections.push_back(std::move(sels));
      }
    }
    zk = std::move(new_zk);
    if (trace) trace->layers.push_back(std::move(lt));
  }

  TaskPredictions preds;
  preds.ctr = sigmoid(tape, tower_forward(tape, towers[0], zk[0]));
  preds.cvr = sigmoid(tape, tower_forward(tape, towers[1], zk[1]));
  preds.ctcvr = esmm_combine(tape, preds.ctr, preds.cvr);
  return preds;
}

HardSharingModel::HardSharingModel(const ModelConfig& cfg,
                                   const DatasetSchema& schema,
                                   std::uint64_t init_seed)
    : cfg_(cfg), schema_(schema) {
  if (static_cast<int>(schema.tasks.size()) != 2)
    throw ConfigError("model expects exactly two tasks (CTR, CTCVR)");
  RandomSource rng(mix_seed(init_seed));
  const auto feats = schema.flat_features();
  for (const auto& f : feats)
    feature_tables.push_back(embedding_table(rng, f.vocab, cfg.embed_dim));
  for (const auto& l : schema.scenario_levels)
    scenario_tables.push_back(embedding_table(rng, l.cardinality, cfg.embed_dim));
  const int in_dim = static_cast<int>(feats.size()) * cfg.embed_dim +
                     schema.level_count() * cfg.embed_dim;
  bottom = {xavier(rng, cfg.expert_dim, in_dim), zeros_param(cfg.expert_dim)};
  towers.push_back(make_tower(rng, cfg.expert_dim, cfg.tower_hidden));
  towers.push_back(make_tower(rng, cfg.expert_dim, cfg.tower_hidden));
  rebuild_param_registry();
}

void HardSharingModel::rebuild_param_registry() {
  params_.clear();
  const auto feats = schema_.flat_features();
  for (std::size_t f = 0; f < feature_tables.size(); ++f)
    params_.push_back({"embed.feat." + feats[f].name, feature_tables[f], false});
  for (std::size_t l = 0; l < scenario_tables.size(); ++l)
    params_.push_back({"embed.level." + schema_.scenario_levels[l].name,
                       scenario_tables[l], false});
  params_.push_back({"bottom.w", bottom.w, true});
  params_.push_back({"bottom.b", bottom.b, false});
  push_tower_params(params_, "tower.ctr", towers[0]);
  push_tower_params(params_, "tower.cvr", towers[1]);
}

TaskPredictions HardSharingModel::forward(Tape& tape, const Batch& batch,
                                          bool training, RandomSource& rng,
                                          ForwardTrace* trace) {
  (void)training;
  (void)rng;
  if (trace) {
    trace->batch = batch.size;
    trace->layers.clear();
  }
  std::vector<Tensor> parts;
  for (std::size_t f = 0; f < feature_tables.size(); ++f)
    parts.push_back(gather_rows(tape, feature_tables[f], batch.feature_ids[f]));
  for (std::size_t l = 0; l < scenario_tables.size(); ++l)
    parts.push_back(gather_rows(tape, scenario_tables[l], batch.scenario_ids[l]));
  Tensor x = concat(tape, parts, 1);
  Tensor h = relu(tape, linear(tape, x, bottom.w, bottom.b));
  TaskPredictions preds;
  preds.ctr = sigmoid(tape, tower_forward(tape, towers[0], h));
  preds.cvr = sigmoid(tape, tower_forward(tape, towers[1], h));
  preds.ctcvr = esmm_combine(tape, preds.ctr, preds.cvr);
  return preds;
}

std::unique_ptr<Model> make_model(ModelKind kind, const ModelConfig& cfg,
                                  const DatasetSchema& schema,
                                  std::uint64_t init_seed) {
  if (kind == ModelKind::hard_sharing)
    return std::make_unique<HardSharingModel>(cfg, schema, init_seed);
  return std::make_unique<AESM2Model>(kind, cfg, schema, init_seed);
}

SinglePrediction forward_single(Model& model, const Instance& instance) {
  validate_instance(model.schema(), instance);
  Batch batch = make_batch(model.schema(), {instance}, {0});
  Tape tape;
  tape.set_recording(false);
  RandomSource rng(0);
  SinglePrediction out;
  TaskPredictions preds = model.forward(tape, batch, false, rng, &out.trace);
  out.ctr = preds.ctr.value();
  out.cvr = preds.cvr.value();
  out.ctcvr = preds.ctcvr.value();
  return out;
}

void save_checkpoint(Model& model, const std::string& path) {
  json j;
  j["format"] = "aesm2-checkpoint-v1";
  j["kind"] = to_string(model.kind());
  j["config"] = json::parse(model_config_to_json(model.config()));
  j["schema"] = json::parse(model.schema().to_json());
  json params = json::array();
  for (const auto& p : model.params()) {
    json jp;
    jp["name"] = p.name;
    jp["shape"] = p.tensor.shape();
    jp["data"] = p.tensor.values();
    params.push_back(std::move(jp));
  }
  j["params"] = std::move(params);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp);
    if (!os) throw IoError("cannot open '" + tmp + "' for writing");
    os << j.dump();
    if (!os) throw IoError("write failed for '" + tmp + "'");
  }
  std::rename(tmp.c_str(), path.c_str());
}

void load_checkpoint(Model& model, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open checkpoint '" + path + "'");
  json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    throw IoError("checkpoint '" + path + "' is not valid JSON: " + e.what());
  }
  if (!j.contains("format") || j["format"] != "aesm2-checkpoint-v1")
    throw IoError("checkpoint '" + path + "' has an unknown format tag");
  if (j.contains("kind") && j["kind"].get<std::string>() != to_string(model.kind()))
    throw ConfigError("checkpoint model kind '" + j["kind"].get<std::string>() +
                      "' does not match '" + to_string(model.kind()) + "'");

  std::vector<std::string> problems;
  auto& params = model.params();
  std::size_t loaded = 0;
  for (const auto& jp : j.at("params")) {
    const std::string name = jp.at("name").get<std::string>();
    auto it = std::find_if(params.begin(), params.end(),
                           [&](const NamedParam& p) { return p.name == name; });
    if (it == params.end()) {
      problems.push_back("unexpected tensor '" + name + "'");
      continue;
    }
    const auto shape = jp.at("shape").get<std::vector<int>>();
    if (shape != it->tensor.shape()) {
      problems.push_back("tensor '" + name + "' shape mismatch");
      continue;
    }
    auto data = jp.at("data").get<std::vector<double>>();
    if (data.size() != it->tensor.values().size()) {
      problems.push_back("tensor '" + name + "' size mismatch");
      continue;
    }
    it->tensor.values() = std::move(data);
    ++loaded;
  }
  if (loaded != params.size())
    problems.push_back("checkpoint provides " + std::to_string(loaded) + " of " +
                       std::to_string(params.size()) + " model tensors");
  if (!problems.empty()) {
    std::string msg = "checkpoint '" + path + "' does not match the model:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
}

}  // namespace aesm2

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "aesm2/data.hpp"
#include "aesm2/ops.hpp"
#include "aesm2/selection.hpp"
#include "aesm2/tensor.hpp"

namespace aesm2 {

enum class ModelKind { aesm2, mmoe, hard_sharing, static_split };

ModelKind parse_model_kind(const std::string& name);
std::string to_string(ModelKind kind);

struct ModelConfig {
  int embed_dim = 8;
  int expert_dim = 32;
  int tower_hidden = 32;
  int scenario_experts = 6;
  int task_experts = 6;
  int task_layer_count = 2;
  int k_specific = 1;
  int k_shared = 1;
  double noise_scale = 0.01;
  // static_split: branch j owns experts [j*per_branch, (j+1)*per_branch),
  // the last `static_shared` experts are shared by every branch.
  int static_specific_per_branch = 2;
  int static_shared = 2;
};

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

struct NamedParam {
  std::string name;
  Tensor tensor;
  bool weight_matrix = false;  // participates in L2
};

struct GateParams {
  Tensor w, b;
};

struct ExpertParams {
  Tensor w, b;
};

struct MoeLayer {
  std::vector<ExpertParams> experts;
  std::vector<GateParams> gates;  // one per branch (scenario or task)
};

struct Tower {
  Tensor w1, b1, w2, b2;
};

struct TaskPredictions {
  Tensor ctr;    // B x 1, in (0,1)
  Tensor cvr;    // B x 1
  Tensor ctcvr;  // B x 1, ctr * cvr
};

// Per-layer record of what the selection saw and decided, kept for the
// auxiliary losses (through g_tilde, which stays on the tape) and for the
// sparsity/utilization analyses. Scenario layers have a single slot (the
// instance's own branch); task layers one slot per task.
struct LayerTrace {
  Tensor g_tilde;  // B x (n*m); undefined in dense/fixed selection modes
  int n = 0;
  int m = 0;
  bool task_level = false;
  std::vector<std::vector<SelectionResult>> selections;  // [slot][instance]
  std::vector<Tensor> mixture_weights;                   // [slot], B x n
};

struct ForwardTrace {
  int batch = 0;
  std::vector<LayerTrace> layers;
};

class Model {
 public:
  virtual ~Model() = default;
  virtual ModelKind kind() const = 0;
  virtual const ModelConfig& config() const = 0;
  virtual const DatasetSchema& schema() const = 0;
  virtual TaskPredictions forward(Tape& tape, const Batch& batch, bool training,
                                  RandomSource& rng, ForwardTrace* trace) = 0;
  virtual std::vector<NamedParam>& params() = 0;
};

// Shared embedding layer output for a batch.
struct Embedded {
  Tensor x;                      // B x d, concatenated group embeddings
  std::vector<Tensor> s_path;    // per scenario level, B x embed_dim
  std::vector<Tensor> t_all;     // per task, B x embed_dim
};

// AESM2 proper plus the two MMoE-structured baselines: kind selects the
// gating mode (automatic KL selection, dense softmax, or a static PLE-style
// specific/shared partition).
class AESM2Model : public Model {
 public:
  AESM2Model(ModelKind kind, const ModelConfig& cfg, const DatasetSchema& schema,
             std::uint64_t init_seed);

  ModelKind kind() const override { return kind_; }
  const ModelConfig& config() const override { return cfg_; }
  const DatasetSchema& schema() const override { return schema_; }
  TaskPredictions forward(Tape& tape, const Batch& batch, bool training,
                          RandomSource& rng, ForwardTrace* trace) override;
  std::vector<NamedParam>& params() override { return params_; }

  Embedded embed(Tape& tape, const Batch& batch);

  // Active experts for branch j under the static partition.
  std::vector<int> static_active(int branch, int n) const;

  std::vector<Tensor> feature_tables;   // per flattened feature, vocab x dim
  std::vector<Tensor> scenario_tables;  // per level, cardinality x dim
  Tensor task_table;                    // n_tasks x dim
  std::vector<MoeLayer> scenario_layers;
  std::vector<MoeLayer> task_layers;
  std::vector<Tower> towers;  // towers[0] = CTR, towers[1] = CVR

  void rebuild_param_registry();

 private:
  ModelKind kind_;
  ModelConfig cfg_;
  DatasetSchema schema_;
  std::vector<NamedParam> params_;
};

// Shared-bottom baseline: one hidden layer on [x, s_path], per-task towers.
class HardSharingModel : public Model {
 public:
  HardSharingModel(const ModelConfig& cfg, const DatasetSchema& schema,
                   std::uint64_t init_seed);

  ModelKind kind() const override { return ModelKind::hard_sharing; }
  const ModelConfig& config() const override { return cfg_; }
  const DatasetSchema& schema() const override { return schema_; }
  TaskPredictions forward(Tape& tape, const Batch& batch, bool training,
                          RandomSource& rng, ForwardTrace* trace) override;
  std::vector<NamedParam>& params() override { return params_; }

  std::vector<Tensor> feature_tables;
  std::vector<Tensor> scenario_tables;
  ExpertParams bottom;
  std::vector<Tower> towers;

  void rebuild_param_registry();

 private:
  ModelConfig cfg_;
  DatasetSchema schema_;
  std::vector<NamedParam> params_;
};

std::unique_ptr<Model> make_model(ModelKind kind, const ModelConfig& cfg,
                                  const DatasetSchema& schema,
                                  std::uint64_t init_seed);

// Expert outputs relu(W x + b) for every expert on one batch input.
std::vector<Tensor> expert_outputs(Tape& tape,
                                   const std::vector<ExpertParams>& experts,
                                   const Tensor& input);

// Standard MMoE combine: softmax the (possibly masked) gate logits and mix
// the expert outputs.
Tensor mmoe_forward(Tape& tape, const Tensor& input,
                    const std::vector<ExpertParams>& experts,
                    const Tensor& gate_logits);

Tensor esmm_combine(Tape& tape, const Tensor& ctr, const Tensor& cvr);

// Single-instance convenience wrapper (batch of one).
struct SinglePrediction {
  double ctr, cvr, ctcvr;
  ForwardTrace trace;
};
SinglePrediction forward_single(Model& model, const Instance& instance);

// Checkpoint: JSON with a format tag, config echo and named parameter
// tensors; numbers round-trip bit-exactly.
void save_checkpoint(Model& model, const std::string& path);
void load_checkpoint(Model& model, const std::string& path);

}  // namespace aesm2

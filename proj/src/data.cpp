#include "aesm2/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "aesm2/error.hpp"

namespace aesm2 {

using nlohmann::json;

int DatasetSchema::feature_count() const {
  int n = 0;
  for (const auto& g : groups) n += static_cast<int>(g.features.size());
  return n;
}

std::vector<FeatureDef> DatasetSchema::flat_features() const {
  std::vector<FeatureDef> out;
  for (const auto& g : groups)
    for (const auto& f : g.features)
      out.push_back({g.name + "_" + f.name, f.vocab});
  return out;
}

int DatasetSchema::scenario_count() const {
  int n = 1;
  for (const auto& l : scenario_levels) n *= l.cardinality;
  return n;
}

std::string DatasetSchema::to_json() const {
  json j;
  for (const auto& g : groups) {
    json jg;
    jg["name"] = g.name;
    for (const auto& f : g.features)
      jg["features"].push_back({{"name", f.name}, {"vocab", f.vocab}});
    j["groups"].push_back(jg);
  }
  for (const auto& l : scenario_levels)
    j["scenario_levels"].push_back(
        {{"name", l.name}, {"cardinality", l.cardinality}});
  j["tasks"] = tasks;
  return j.dump(2);
}

DatasetSchema DatasetSchema::from_json(const std::string& text) {
  json j = json::parse(text);
  DatasetSchema s;
  for (const auto& jg : j.at("groups")) {
    GroupDef g;
    g.name = jg.at("name").get<std::string>();
    for (const auto& jf : jg.at("features"))
      g.features.push_back(
          {jf.at("name").get<std::string>(), jf.at("vocab").get<int>()});
    s.groups.push_back(std::move(g));
  }
  for (const auto& jl : j.at("scenario_levels"))
    s.scenario_levels.push_back({jl.at("name").get<std::string>(),
                                 jl.at("cardinality").get<int>()});
  if (j.contains("tasks")) s.tasks = j.at("tasks").get<std::vector<std::string>>();
  return s;
}

int scenario_index(const DatasetSchema& schema, const Instance& inst) {
  int idx = 0;
  for (std::size_t l = 0; l < schema.scenario_levels.size(); ++l)
    idx = idx * schema.scenario_levels[l].cardinality + inst.scenario_path[l];
  return idx;
}

std::string scenario_label(const DatasetSchema& schema, int index) {
  std::vector<int> path(schema.scenario_levels.size());
  for (std::size_t l = schema.scenario_levels.size(); l-- > 0;) {
    path[l] = index % schema.scenario_levels[l].cardinality;
    index /= schema.scenario_levels[l].cardinality;
  }
  std::string out;
  for (std::size_t l = 0; l < path.size(); ++l) {
    if (l) out += ".";
    out += schema.scenario_levels[l].name + std::to_string(path[l]);
  }
  return out;
}

void validate_instance(const DatasetSchema& schema, const Instance& inst) {
  const auto feats = schema.flat_features();
  if (inst.features.size() != feats.size())
    throw DataError("instance has " + std::to_string(inst.features.size()) +
                    " features, schema declares " + std::to_string(feats.size()));
  for (std::size_t f = 0; f < feats.size(); ++f)
    if (inst.features[f] < 0 || inst.features[f] >= feats[f].vocab)
      throw DataError("feature '" + feats[f].name + "' id " +
                      std::to_string(inst.features[f]) + " outside vocab " +
                      std::to_string(feats[f].vocab));
  if (inst.scenario_path.size() != schema.scenario_levels.size())
    throw DataError("scenario path length mismatch");
  for (std::size_t l = 0; l < inst.scenario_path.size(); ++l)
    if (inst.scenario_path[l] < 0 ||
        inst.scenario_path[l] >= schema.scenario_levels[l].cardinality)
      throw DataError("scenario level '" + schema.scenario_levels[l].name +
                      "' id out of range");
  if (inst.click != 0 && inst.click != 1)
    throw DataError("click label must be 0 or 1");
  if (inst.conversion != 0 && inst.conversion != 1)
    throw DataError("conversion label must be 0 or 1");
  if (inst.conversion == 1 && inst.click == 0)
    throw DataError("conversion without click");
}

void SyntheticSpec::validate() const {
  const int s = schema.scenario_count();
  if (s < 1) throw ConfigError("synthetic spec: no scenarios");
  if (alpha < 0.0 || beta < 0.0 || alpha + beta > 1.0)
    throw ConfigError("synthetic spec: need alpha, beta >= 0 and alpha + beta <= 1");
  if (static_cast<int>(shares.size()) != s ||
      static_cast<int>(ctr_base.size()) != s ||
      static_cast<int>(cvr_base.size()) != s)
    throw ConfigError("synthetic spec: shares/rates must have one entry per scenario");
  double total = 0.0;
  for (double v : shares) {
    if (v < 0.0) throw ConfigError("synthetic spec: negative share");
    total += v;
  }
  if (std::fabs(total - 1.0) > 1e-9)
    throw ConfigError("synthetic spec: shares must sum to 1");
  for (double v : ctr_base)
    if (v <= 0.0 || v >= 1.0) throw ConfigError("synthetic spec: ctr base outside (0,1)");
  for (double v : cvr_base)
    if (v <= 0.0 || v >= 1.0) throw ConfigError("synthetic spec: cvr base outside (0,1)");
  if (latent_dim < 1) throw ConfigError("synthetic spec: latent_dim < 1");
  if (interaction_share < 0.0 || interaction_share > 1.0)
    throw ConfigError("synthetic spec: interaction_share outside [0,1]");
}

std::string SyntheticSpec::to_json() const {
  json j;
  j["schema"] = json::parse(schema.to_json());
  j["latent_dim"] = latent_dim;
  j["alpha"] = alpha;
  j["beta"] = beta;
  j["identical_scenarios"] = identical_scenarios;
  j["shares"] = shares;
  j["ctr_base"] = ctr_base;
  j["cvr_base"] = cvr_base;
  j["signal_ctr"] = signal_ctr;
  j["signal_cvr"] = signal_cvr;
  j["interaction_share"] = interaction_share;
  j["latent_seed"] = latent_seed;
  return j.dump(2);
}

SyntheticSpec SyntheticSpec::from_json(const std::string& text) {
  json j = json::parse(text);
  SyntheticSpec s = default_synthetic_spec();
  if (j.contains("schema")) s.schema = DatasetSchema::from_json(j["schema"].dump());
  if (j.contains("latent_dim")) s.latent_dim = j["latent_dim"].get<int>();
  if (j.contains("alpha")) s.alpha = j["alpha"].get<double>();
  if (j.contains("beta")) s.beta = j["beta"].get<double>();
  if (j.contains("identical_scenarios"))
    s.identical_scenarios = j["identical_scenarios"].get<bool>();
  if (j.contains("shares")) s.shares = j["shares"].get<std::vector<double>>();
  if (j.contains("ctr_base")) s.ctr_base = j["ctr_base"].get<std::vector<double>>();
  if (j.contains("cvr_base")) s.cvr_base = j["cvr_base"].get<std::vector<double>>();
  if (j.contains("signal_ctr")) s.signal_ctr = j["signal_ctr"].get<double>();
  if (j.contains("signal_cvr")) s.signal_cvr = j["signal_cvr"].get<double>();
  if (j.contains("interaction_share"))
    s.interaction_share = j["interaction_share"].get<double>();
  if (j.contains("latent_seed")) s.latent_seed = j["latent_seed"].get<std::uint64_t>();
  return s;
}

SyntheticSpec default_synthetic_spec() {
  SyntheticSpec s;
  s.schema.groups = {
      {"user", {{"u0", 128}, {"u1", 128}}},
      {"item", {{"i0", 128}, {"i1", 128}}},
      {"query", {{"q0", 128}}},
  };
  s.schema.scenario_levels = {{"channel", 2}, {"domain", 2}};
  s.shares = {0.1298, 0.2891, 0.5167, 0.0644};
  s.ctr_base = {0.2834, 0.0233, 0.4374, 0.0774};
  s.cvr_base = {0.20, 0.12, 0.15, 0.10};
  return s;
}

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Ground truth for one task head: per-feature latent embeddings plus one
// mixed logit vector per leaf scenario over [per-feature latents,
// per-feature-pair latent products]. The interaction block is what makes the
// per-scenario functions non-additive.
struct GroundTruth {
  std::vector<std::vector<double>> feature_embed;  // [feature][vocab*latent]
  std::vector<std::vector<double>> scenario_w;     // [scenario][dim]
  std::vector<std::pair<int, int>> pairs;          // feature index pairs
};

std::vector<double> random_vec(RandomSource& rng, std::size_t n, double scale) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

GroundTruth build_ground_truth(const SyntheticSpec& spec, double signal,
                               RandomSource& rng) {
  GroundTruth gt;
  const auto feats = spec.schema.flat_features();
  const int g = spec.latent_dim;
  const int n_feats = static_cast<int>(feats.size());
  for (const auto& f : feats)
    gt.feature_embed.push_back(
        random_vec(rng, static_cast<std::size_t>(f.vocab) * g, 1.0));
  for (int i = 0; i < n_feats; ++i)
    for (int j = i + 1; j < n_feats; ++j) gt.pairs.push_back({i, j});

  const int lin_dim = n_feats * g;
  const int int_dim = static_cast<int>(gt.pairs.size()) * g;
  const int dim = lin_dim + int_dim;
  const double rho = int_dim > 0 ? spec.interaction_share : 0.0;
  // Latents are unit normal, so both the linear entries and the pairwise
  // products have unit variance; blockwise scales split the logit variance.
  const double lin_scale =
      lin_dim > 0 ? signal * std::sqrt((1.0 - rho) / lin_dim) : 0.0;
  const double int_scale = int_dim > 0 ? signal * std::sqrt(rho / int_dim) : 0.0;

  auto component = [&]() {
    std::vector<double> v(static_cast<std::size_t>(dim));
    for (int i = 0; i < lin_dim; ++i) v[static_cast<std::size_t>(i)] = lin_scale * rng.normal();
    for (int i = lin_dim; i < dim; ++i) v[static_cast<std::size_t>(i)] = int_scale * rng.normal();
    return v;
  };

  const int channels = spec.schema.scenario_levels.empty()
                           ? 1
                           : spec.schema.scenario_levels.front().cardinality;
  const int scenarios = spec.schema.scenario_count();
  const int domains = scenarios / channels;

  std::vector<std::vector<double>> w_channel, w_domain, w_own;
  for (int c = 0; c < channels; ++c) w_channel.push_back(component());
  for (int d = 0; d < domains; ++d) w_domain.push_back(component());
  for (int s = 0; s < scenarios; ++s) w_own.push_back(component());

  // Every component's interaction weights are concentrated on a small
  // disjoint subset of feature pairs: each scenario's function is compact
  // (a couple of experts' worth), but the union across scenarios spans all
  // pairs. Pairs rotate through the roles own/channel/domain; within a role
  // they are dealt round-robin to the respective component.
  const int n_pairs = static_cast<int>(gt.pairs.size());
  if (n_pairs >= 3 && scenarios > 1) {
    auto mask_to = [&](std::vector<double>& w, int role, int member, int cycle) {
      std::vector<bool> keep(static_cast<std::size_t>(n_pairs), false);
      int kept = 0, seen = 0;
      for (int p = 0; p < n_pairs; ++p) {
        if (p % 3 != role) continue;
        if (seen % cycle == member) {
          keep[static_cast<std::size_t>(p)] = true;
          ++kept;
        }
        ++seen;
      }
      const double boost =
          kept > 0 ? std::sqrt(static_cast<double>(n_pairs) / kept) : 0.0;
      for (int p = 0; p < n_pairs; ++p)
        for (int i = 0; i < g; ++i) {
          auto& entry = w[static_cast<std::size_t>(lin_dim) +
                          static_cast<std::size_t>(p) * g + static_cast<std::size_t>(i)];
          entry = keep[static_cast<std::size_t>(p)] ? entry * boost : 0.0;
        }
    };
    for (int s = 0; s < scenarios; ++s)
      mask_to(w_own[static_cast<std::size_t>(s)], 0, s % scenarios, scenarios);
    for (int c = 0; c < channels; ++c)
      mask_to(w_channel[static_cast<std::size_t>(c)], 1, c % channels, channels);
    for (int d = 0; d < domains; ++d)
      mask_to(w_domain[static_cast<std::size_t>(d)], 2, d % domains, domains);
  }

  if (spec.identical_scenarios) {
    for (auto& w : w_channel) w = w_channel[0];
    for (auto& w : w_domain) w = w_domain[0];
    for (auto& w : w_own) w = w_own[0];
  }

  const double a = spec.alpha, b = spec.beta, o = 1.0 - a - b;
  for (int s = 0; s < scenarios; ++s) {
    const int c = s / domains;
    const int d = s % domains;
    std::vector<double> w(static_cast<std::size_t>(dim), 0.0);
    for (int i = 0; i < dim; ++i)
      w[static_cast<std::size_t>(i)] =
          a * w_channel[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)] +
          b * w_domain[static_cast<std::size_t>(d)][static_cast<std::size_t>(i)] +
          o * w_own[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)];
    // Pin each scenario's logit scale to the signal target regardless of the
    // mixing coefficients.
    double norm = 0.0;
    for (double v : w) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0.0)
      for (auto& v : w) v *= signal / norm;
    gt.scenario_w.push_back(std::move(w));
  }
  return gt;
}

double logit_for(const GroundTruth& gt, const SyntheticSpec& spec,
                 const std::vector<int>& feature_ids, int scenario) {
  const auto& w = gt.scenario_w[static_cast<std::size_t>(scenario)];
  const int g = spec.latent_dim;
  double s = 0.0;
  std::size_t off = 0;
  for (std::size_t f = 0; f < feature_ids.size(); ++f) {
    const double* e = gt.feature_embed[f].data() +
                      static_cast<std::size_t>(feature_ids[f]) * g;
    for (int i = 0; i < g; ++i) s += w[off + static_cast<std::size_t>(i)] * e[i];
    off += static_cast<std::size_t>(g);
  }
  for (const auto& [fi, fj] : gt.pairs) {
    const double* ei = gt.feature_embed[static_cast<std::size_t>(fi)].data() +
                       static_cast<std::size_t>(feature_ids[static_cast<std::size_t>(fi)]) * g;
    const double* ej = gt.feature_embed[static_cast<std::size_t>(fj)].data() +
                       static_cast<std::size_t>(feature_ids[static_cast<std::size_t>(fj)]) * g;
    for (int i = 0; i < g; ++i)
      s += w[off + static_cast<std::size_t>(i)] * ei[i] * ej[i];
    off += static_cast<std::size_t>(g);
  }
  return s;
}

// Intercept such that mean(sigmoid(score + b)) == target over `scores`.
double calibrate_intercept(const std::vector<double>& scores, double target) {
  double lo = -40.0, hi = 40.0;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    double mean = 0.0;
    for (double s : scores) mean += sigmoid(s + mid);
    mean /= static_cast<double>(scores.size());
    if (mean < target)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

std::vector<int> path_for_scenario(const DatasetSchema& schema, int index) {
  std::vector<int> path(schema.scenario_levels.size());
  for (std::size_t l = schema.scenario_levels.size(); l-- > 0;) {
    path[l] = index % schema.scenario_levels[l].cardinality;
    index /= schema.scenario_levels[l].cardinality;
  }
  return path;
}

std::vector<int> scenario_counts(const std::vector<double>& shares, int total) {
  const int s = static_cast<int>(shares.size());
  std::vector<int> counts(s);
  std::vector<std::pair<double, int>> frac(s);
  int assigned = 0;
  for (int i = 0; i < s; ++i) {
    const double exact = shares[static_cast<std::size_t>(i)] * total;
    counts[i] = static_cast<int>(std::floor(exact));
    frac[i] = {exact - counts[i], i};
    assigned += counts[i];
  }
  std::stable_sort(frac.begin(), frac.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int r = 0; r < total - assigned; ++r) ++counts[frac[static_cast<std::size_t>(r)].second];
  return counts;
}

}  // namespace

namespace {

// Optional sink for the true per-instance probabilities (ceiling analysis).
struct TrueScores {
  std::vector<double> p_click;
  std::vector<double> p_ctcvr;
};

Dataset generate_synthetic_impl(const SyntheticSpec& spec, int count,
                                std::uint64_t seed, TrueScores* scores) {
  spec.validate();
  if (count < 1) throw ConfigError("generate_synthetic: sample count must be >= 1");

  RandomSource latent_rng(mix_seed(spec.latent_seed));
  RandomSource ctr_rng = latent_rng.fork("ctr-truth");
  RandomSource cvr_rng = latent_rng.fork("cvr-truth");
  const GroundTruth ctr_gt = build_ground_truth(spec, spec.signal_ctr, ctr_rng);
  const GroundTruth cvr_gt = build_ground_truth(spec, spec.signal_cvr, cvr_rng);

  RandomSource rng(mix_seed(seed));
  const auto feats = spec.schema.flat_features();
  const int scenarios = spec.schema.scenario_count();

  Dataset out;
  out.schema = spec.schema;
  out.instances.reserve(static_cast<std::size_t>(count));
  std::vector<double> true_click, true_ctcvr;

  const std::vector<int> counts = scenario_counts(spec.shares, count);
  for (int s = 0; s < scenarios; ++s) {
    const int n = counts[static_cast<std::size_t>(s)];
    if (n == 0) continue;
    std::vector<Instance> block(static_cast<std::size_t>(n));
    std::vector<double> ctr_scores(static_cast<std::size_t>(n));
    std::vector<double> cvr_all(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      Instance& inst = block[static_cast<std::size_t>(i)];
      inst.features.resize(feats.size());
      for (std::size_t f = 0; f < feats.size(); ++f)
        inst.features[f] = rng.uniform_int(feats[f].vocab);
      inst.scenario_path = path_for_scenario(spec.schema, s);
      ctr_scores[static_cast<std::size_t>(i)] =
          logit_for(ctr_gt, spec, inst.features, s);
      cvr_all[static_cast<std::size_t>(i)] =
          logit_for(cvr_gt, spec, inst.features, s);
    }
    const double b_ctr =
        calibrate_intercept(ctr_scores, spec.ctr_base[static_cast<std::size_t>(s)]);
    std::vector<double> cvr_scores;
    std::vector<int> clicked;
    for (int i = 0; i < n; ++i) {
      const double p = sigmoid(ctr_scores[static_cast<std::size_t>(i)] + b_ctr);
      if (rng.uniform() < p) {
        block[static_cast<std::size_t>(i)].click = 1;
        clicked.push_back(i);
        cvr_scores.push_back(cvr_all[static_cast<std::size_t>(i)]);
      }
    }
    double b_cvr = 0.0;
    if (!clicked.empty()) {
      b_cvr =
          calibrate_intercept(cvr_scores, spec.cvr_base[static_cast<std::size_t>(s)]);
      for (std::size_t c = 0; c < clicked.size(); ++c) {
        const double p = sigmoid(cvr_scores[c] + b_cvr);
        if (rng.uniform() < p)
          block[static_cast<std::size_t>(clicked[c])].conversion = 1;
      }
    }
    if (scores) {
      for (int i = 0; i < n; ++i) {
        const double pc = sigmoid(ctr_scores[static_cast<std::size_t>(i)] + b_ctr);
        const double pv = sigmoid(cvr_all[static_cast<std::size_t>(i)] + b_cvr);
        true_click.push_back(pc);
        true_ctcvr.push_back(pc * pv);
      }
    }
    for (auto& inst : block) out.instances.push_back(std::move(inst));
  }

  // Mix scenarios together; Fisher-Yates on the generation stream.
  for (std::size_t i = out.instances.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_int(static_cast<int>(i)));
    std::swap(out.instances[i - 1], out.instances[j]);
    if (scores) {
      std::swap(true_click[i - 1], true_click[j]);
      std::swap(true_ctcvr[i - 1], true_ctcvr[j]);
    }
  }
  if (scores) {
    scores->p_click = std::move(true_click);
    scores->p_ctcvr = std::move(true_ctcvr);
  }
  return out;
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec, int count,
                           std::uint64_t seed) {
  return generate_synthetic_impl(spec, count, seed, nullptr);
}

Dataset generate_synthetic_with_scores(const SyntheticSpec& spec, int count,
                                       std::uint64_t seed,
                                       std::vector<double>* p_click,
                                       std::vector<double>* p_ctcvr) {
  TrueScores scores;
  Dataset out = generate_synthetic_impl(spec, count, seed, &scores);
  if (p_click) *p_click = std::move(scores.p_click);
  if (p_ctcvr) *p_ctcvr = std::move(scores.p_ctcvr);
  return out;
}

void write_csv(const std::string& path, const Dataset& dataset) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  const auto feats = dataset.schema.flat_features();
  for (const auto& l : dataset.schema.scenario_levels) os << l.name << ',';
  for (const auto& f : feats) os << f.name << ',';
  os << "click,conversion\n";
  for (const auto& inst : dataset.instances) {
    for (int v : inst.scenario_path) os << v << ',';
    for (int v : inst.features) os << v << ',';
    os << inst.click << ',' << inst.conversion << '\n';
  }
  if (!os) throw IoError("write failed for '" + path + "'");
}

Dataset load_csv(const std::string& path, const DatasetSchema& schema) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  const auto feats = schema.flat_features();

  std::string line;
  if (!std::getline(is, line)) throw DataError(path + ": missing header row");
  {
    std::string expected;
    for (const auto& l : schema.scenario_levels) expected += l.name + ",";
    for (const auto& f : feats) expected += f.name + ",";
    expected += "click,conversion";
    if (line != expected)
      throw DataError(path + ": header does not match schema\n  expected: " +
                      expected + "\n  found:    " + line);
  }

  Dataset out;
  out.schema = schema;
  const std::size_t ncols = schema.scenario_levels.size() + feats.size() + 2;
  long line_no = 1;
  std::vector<int> cols;
  cols.reserve(ncols);
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    cols.clear();
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      const std::string cell = line.substr(
          start, comma == std::string::npos ? std::string::npos : comma - start);
      try {
        std::size_t used = 0;
        const int v = std::stoi(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
        cols.push_back(v);
      } catch (const std::exception&) {
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": cannot parse '" + cell + "' as an integer");
      }
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (cols.size() != ncols)
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(ncols) + " columns, found " +
                      std::to_string(cols.size()));
    Instance inst;
    std::size_t c = 0;
    for (std::size_t l = 0; l < schema.scenario_levels.size(); ++l)
      inst.scenario_path.push_back(cols[c++]);
    for (std::size_t f = 0; f < feats.size(); ++f)
      inst.features.push_back(cols[c++]);
    inst.click = cols[c++];
    inst.conversion = cols[c++];
    try {
      validate_instance(schema, inst);
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    out.instances.push_back(std::move(inst));
  }
  return out;
}

Batch make_batch(const DatasetSchema& schema, const std::vector<Instance>& all,
                 const std::vector<int>& indices) {
  Batch b;
  b.size = static_cast<int>(indices.size());
  b.feature_ids.resize(static_cast<std::size_t>(schema.feature_count()));
  b.scenario_ids.resize(schema.scenario_levels.size());
  for (auto& v : b.feature_ids) v.reserve(indices.size());
  for (auto& v : b.scenario_ids) v.reserve(indices.size());
  b.click.reserve(indices.size());
  b.conversion.reserve(indices.size());
  b.scenario.reserve(indices.size());
  for (int idx : indices) {
    const Instance& inst = all[static_cast<std::size_t>(idx)];
    for (std::size_t f = 0; f < b.feature_ids.size(); ++f)
      b.feature_ids[f].push_back(inst.features[f]);
    for (std::size_t l = 0; l < b.scenario_ids.size(); ++l)
      b.scenario_ids[l].push_back(inst.scenario_path[l]);
    b.click.push_back(inst.click);
    b.conversion.push_back(inst.conversion);
    b.scenario.push_back(scenario_index(schema, inst));
  }
  return b;
}

BatchIterator::BatchIterator(const Dataset& dataset, int batch_size,
                             std::uint64_t shuffle_seed, bool shuffle)
    : dataset_(&dataset), batch_size_(batch_size) {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  order_.resize(dataset.instances.size());
  std::iota(order_.begin(), order_.end(), 0);
  if (shuffle) {
    RandomSource rng(mix_seed(shuffle_seed));
    for (std::size_t i = order_.size(); i > 1; --i)
      std::swap(order_[i - 1],
                order_[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(i)))]);
  }
}

bool BatchIterator::next(Batch& out) {
  if (cursor_ >= order_.size()) return false;
  const std::size_t end = std::min(cursor_ + static_cast<std::size_t>(batch_size_),
                                   order_.size());
  std::vector<int> idx(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                       order_.begin() + static_cast<std::ptrdiff_t>(end));
  cursor_ = end;
  out = make_batch(dataset_->schema, dataset_->instances, idx);
  return true;
}

void BatchIterator::reset() { cursor_ = 0; }

int BatchIterator::batch_count() const {
  return static_cast<int>((order_.size() + static_cast<std::size_t>(batch_size_) - 1) /
                          static_cast<std::size_t>(batch_size_));
}

}  // namespace aesm2

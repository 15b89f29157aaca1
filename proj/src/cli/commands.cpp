// Copyright 2026 The VarMix Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "varmix/cli/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

#include "varmix/core/errors.hpp"
#include "varmix/model/checkpoint.hpp"
#include "varmix/model/loss.hpp"
#include "varmix/vicinal/vicinal.hpp"

namespace varmix {

namespace {

constexpr int kReportSchemaVersion = 1;
constexpr char kLatentStatNote[] =
    "Frechet distance between Gaussian fits of VAE encoder means; a desk-scale substitute for Inception-based "
    "FID/KID";

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  out << j.dump(2) << "\n";
  if (!out) throw IngestionError("cannot write " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw IngestionError("cannot write " + path.string());
}

// One command's hold on a run directory: the lock, the artifacts it writes and
// the metrics it reports, merged into run.json by finish().
class Session {
 public:
  Session(std::string command, const ExperimentConfig& config, bool quiet)
      : command_(std::move(command)),
        config_(config),
        dir_(config.output_dir),
        lock_(dir_),
        quiet_(quiet),
        started_(iso_timestamp()),
        record_(read_run_record(dir_)) {}

  const std::filesystem::path& dir() const { return dir_; }

  std::filesystem::path artifact(const std::string& name, const std::filesystem::path& relative) {
    const std::filesystem::path p = dir_ / relative;
    std::filesystem::create_directories(p.parent_path());
    record_.artifacts[name] = relative.lexically_normal().string();
    return p;
  }

  void metric(const std::string& key, double value) { record_.metrics[key] = value; }

  void log(const std::string& line) const {
    if (!quiet_) std::cerr << "[" << command_ << "] " << line << std::endl;
  }

  RunRecord finish() {
    const std::string hash = experiment_hash(config_);
    if (record_.created.empty()) record_.created = started_;
    record_.config = config_;
    record_.config_hash = hash;
    record_.updated = iso_timestamp();
    record_.history.push_back({command_, hash, started_, record_.updated});
    write_run_record(dir_, record_);
    return record_;
  }

  std::string config_hash() const { return experiment_hash(config_); }

 private:
  std::string command_;
  const ExperimentConfig& config_;
  std::filesystem::path dir_;
  RunLock lock_;
  bool quiet_;
  std::string started_;
  RunRecord record_;
};

VaeConfig vae_config(const ExperimentConfig& c) {
  if (c.vae) return *c.vae;
  VaeConfig v;
  v.image_shape = c.model.input_shape;
  v.seed = derive_seed(c.seed, "vae");
  return v;
}

std::filesystem::path vae_path(const ExperimentConfig& c) {
  return c.train.vae_checkpoint.empty() ? c.output_dir / "vae.ckpt" : std::filesystem::path(c.train.vae_checkpoint);
}

std::unique_ptr<Vae<float>> load_codec(const ExperimentConfig& c, bool required, const std::string& why) {
  const std::filesystem::path p = vae_path(c);
  if (!std::filesystem::exists(p)) {
    if (required)
      throw ConfigError(why + " needs a VAE checkpoint at " + p.string() +
                        "; run train-vae first or set train.vae_checkpoint");
    return nullptr;
  }
  auto vae = std::make_unique<Vae<float>>(load_vae<float>(p));
  if (!(vae->image_shape() == c.model.input_shape))
    throw ConfigError("VAE checkpoint " + p.string() + " expects images " + vae->image_shape().str() +
                      " but the model takes " + c.model.input_shape.str());
  return vae;
}

Model<float> load_trained_model(const ExperimentConfig& c) {
  const std::filesystem::path p = c.output_dir / "model.ckpt";
  if (!std::filesystem::exists(p)) throw ConfigError("no trained model at " + p.string() + "; run train first");
  Model<float> m = load_model<float>(p);
  if (!(m.input_shape() == c.model.input_shape) || m.num_classes() != c.model.num_classes)
    throw ConfigError("model checkpoint " + p.string() + " does not match the configured model");
  return m;
}

Dataset first_rows(const Dataset& ds, Index n) {
  if (n <= 0 || n >= ds.size()) return ds;
  std::vector<Index> idx(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  return ds.subset(idx);
}

bool needs_codec(const ExperimentConfig& c) {
  for (const NamedPolicy& p : c.inference)
    if (p.policy.variant == InferenceVariant::kVarMi) return true;
  for (const AttackProfile& a : c.attacks)
    if (a.kind == AttackKind::kAdaptiveVarMi) return true;
  return c.metrics.latent_stats;
}

std::uint64_t attack_seed(const ExperimentConfig& c, const AttackProfile& a) {
  return derive_seed(c.seed, "attack/" + a.name);
}

// Everything evaluation needs, loaded once per command.
struct EvalContext {
  ExperimentConfig config;
  LoadedData data;
  Dataset eval;
  Model<float> model;
  std::unique_ptr<Vae<float>> codec;
  std::unique_ptr<ClassPools> pools;

  explicit EvalContext(const ExperimentConfig& c)
      : config(c),
        data(load_data(c.dataset, c.seed)),
        eval(first_rows(data.test, c.metrics.eval_examples)),
        model(load_trained_model(c)),
        codec(load_codec(c, needs_codec(c), "var-mi inference, the adaptive attack or latent statistics")),
        pools(std::make_unique<ClassPools>(data.train)) {}

  Predictor<float> predictor(const InferencePolicy& p) const {
    return make_predictor<float>(model, p, codec.get(), pools.get());
  }

  AdversarialSet attack(const AttackProfile& a) const {
    return generate_adversarial<float>(model, eval, a, attack_seed(config, a), config.metrics.batch_size, codec.get(),
                                       pools.get());
  }
};

std::vector<AdversarialSet> generate_all(const EvalContext& ctx, const Session& s) {
  std::vector<AdversarialSet> out;
  for (const AttackProfile& a : ctx.config.attacks) {
    s.log("generating " + a.name + " on " + std::to_string(ctx.eval.size()) + " examples");
    out.push_back(ctx.attack(a));
  }
  return out;
}

CorruptionResult corruption_for(const EvalContext& ctx, const InferencePolicy& policy) {
  std::vector<CorruptionKind> kinds = ctx.config.metrics.corruption_kinds;
  if (kinds.empty()) {
    const auto all = all_corruption_kinds();
    kinds.assign(all.begin(), all.end());
  }
  return corruption_eval(ctx.predictor(policy), ctx.eval, kinds, derive_seed(ctx.config.seed, "corruption"),
                         CorruptionTable::defaults(), ctx.config.metrics.batch_size);
}

struct SweepRow {
  double value;
  std::string policy;
  std::string metric;
  double accuracy;
};

void write_sweep(Session& s, const std::string& parameter, const std::vector<SweepRow>& rows) {
  std::ostringstream csv;
  csv.precision(10);
  csv << parameter << ",policy,metric,accuracy\n";
  nlohmann::json j = nlohmann::json::array();
  std::map<std::string, PlotSeries> series;
  for (const SweepRow& r : rows) {
    csv << r.value << "," << r.policy << "," << r.metric << "," << r.accuracy << "\n";
    j.push_back({{parameter, r.value}, {"policy", r.policy}, {"metric", r.metric}, {"accuracy", r.accuracy}});
    PlotSeries& ps = series[r.policy + "/" + r.metric];
    ps.name = r.policy + "/" + r.metric;
    ps.x.push_back(r.value);
    ps.y.push_back(r.accuracy);
  }
  const std::string stem = "sweep_" + parameter;
  write_text(s.artifact(stem + ".csv", stem + ".csv"), csv.str());
  write_json(s.artifact(stem + ".json", stem + ".json"), {{"parameter", parameter}, {"rows", j}});
  std::vector<PlotSeries> plot;
  for (auto& [name, ps] : series) plot.push_back(ps);
  write_line_plot(s.artifact(stem + ".png", stem + ".png"), plot);
}

// Accuracy of every mixup-inference policy at every swept lambda_MI or N_MI,
// scored on attack tensors generated once from the base model.
void inference_sweep(Session& s, const EvalContext& ctx, const SweepSpec& spec) {
  std::vector<NamedPolicy> policies;
  for (const NamedPolicy& p : ctx.config.inference)
    if (p.policy.variant != InferenceVariant::kPlain) policies.push_back(p);
  if (policies.empty())
    throw ConfigError("a " + spec.parameter + " sweep needs at least one mi-ol or var-mi inference policy");
  const std::vector<AdversarialSet> sets = generate_all(ctx, s);
  std::vector<SweepRow> rows;
  for (double v : spec.values) {
    for (NamedPolicy p : policies) {
      if (spec.parameter == "lambda-mi") p.policy.lambda_mi = v;
      else p.policy.n_mi = static_cast<Index>(v);
      p.policy.validate();
      const Predictor<float> predict = ctx.predictor(p.policy);
      rows.push_back({v, p.name, "clean",
                      score(predict, ctx.eval.images(), ctx.eval.labels(), ctx.config.metrics.batch_size)});
      for (std::size_t a = 0; a < sets.size(); ++a)
        rows.push_back({v, p.name, ctx.config.attacks[a].name,
                        score(predict, sets[a].images, sets[a].labels, ctx.config.metrics.batch_size)});
      s.log(spec.parameter + "=" + fmt("%g", v) + " " + p.name + " clean " + fmt("%.4f", rows[rows.size() - 1 - sets.size()].accuracy));
    }
  }
  write_sweep(s, spec.parameter, rows);
}

void merge_eval_metrics(Session& s, const std::string& policy, const RobustnessReport& r,
                        const CalibrationReport* cal) {
  s.metric("eval/" + policy + "/clean", r.clean_accuracy);
  for (const auto& [name, acc] : r.attack_accuracy) s.metric("eval/" + policy + "/attack/" + name, acc);
  if (cal != nullptr) s.metric("eval/" + policy + "/ece", cal->ece);
  if (r.corruption) s.metric("eval/" + policy + "/corruption_mean", r.corruption->mean);
}

}  // namespace

ExperimentConfig resolve_config(const CommandOptions& o) {
  ExperimentConfig c = o.config ? load_config(*o.config) : ExperimentConfig{};
  if (!o.config) c.derive_component_seeds();
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.output_dir = *o.out;
  if (o.preset) c.train = apply_preset(*o.preset, c.train);
  if (o.epoch_scale) {
    c.train.epoch_scale = *o.epoch_scale;
    c.train.epochs.reset();
  }
  if (o.inference) {
    NamedPolicy p;
    p.policy.variant = inference_variant_from_string(*o.inference);
    p.name = std::string(to_string(p.policy.variant));
    c.inference = {p};
  }
  for (NamedPolicy& p : c.inference) {
    if (p.policy.variant == InferenceVariant::kPlain) continue;
    if (o.lambda_mi) p.policy.lambda_mi = *o.lambda_mi;
    if (o.n_mi) p.policy.n_mi = *o.n_mi;
  }
  if (!o.attack_profiles.empty()) {
    std::vector<AttackProfile> known = c.attacks;
    for (const AttackProfile& d : default_attack_profiles())
      if (std::none_of(known.begin(), known.end(), [&](const AttackProfile& k) { return k.name == d.name; }))
        known.push_back(d);
    std::vector<AttackProfile> chosen;
    for (const std::string& name : o.attack_profiles) {
      auto it = std::find_if(known.begin(), known.end(), [&](const AttackProfile& k) { return k.name == name; });
      if (it == known.end()) {
        std::string list;
        for (const AttackProfile& k : known) list += (list.empty() ? "" : ", ") + k.name;
        throw ConfigError("unknown attack profile '" + name + "' (available: " + list + ")");
      }
      chosen.push_back(*it);
    }
    c.attacks = chosen;
  }
  c.derive_component_seeds();
  c.validate();
  return c;
}

RunRecord cmd_train_vae(const CommandOptions& o) {
  const ExperimentConfig c = resolve_config(o);
  Session s(o.adversarial ? "train-vae --adversarial" : "train-vae", c, o.quiet);
  const LoadedData data = load_data(c.dataset, c.seed);
  const VaeConfig vc = vae_config(c);
  if (!(vc.image_shape == data.train.shape()))
    throw ConfigError("vae.image_shape " + vc.image_shape.str() + " does not match the data " + data.train.shape().str());
  VaeTrainHooks<float> hooks;
  hooks.on_epoch = [&](const VaeEpochLog& e) {
    s.log("epoch " + std::to_string(e.epoch) + "/" + std::to_string(vc.epochs) + " loss " + fmt("%.5f", e.loss) +
          " recon " + fmt("%.5f", e.recon) + " mmd " + fmt("%.5f", e.mmd));
  };
  const Vae<float> vae = o.adversarial ? train_vae_adversarial<float>(data.train, vc, c.train.attack, hooks)
                                       : train_vae<float>(data.train, vc, hooks);
  const std::filesystem::path out = vae_path(c);
  nlohmann::json meta = {{"adversarial", o.adversarial}, {"config_hash", s.config_hash()}};
  if (o.adversarial) meta["attack"] = c.train.attack;
  if (c.train.vae_checkpoint.empty()) {
    save_vae(s.artifact("vae", "vae.ckpt"), vae, meta);
  } else {
    std::filesystem::create_directories(out.parent_path());
    save_vae(out, vae, meta);
  }
  write_json(s.artifact("vae_curve", "vae_curve.json"), vae.curve());
  const Dataset shown = first_rows(data.test, 16);
  const Matrix<float> x = shown.all_images<float>();
  Matrix<float> grid(2 * x.rows(), x.cols());
  grid << x, vae.decode_mean(vae.encode_mean(x));
  write_image_grid(s.artifact("vae_reconstructions", "vae_reconstructions.png"), grid, shown.shape(), x.rows());
  const double mse = reconstruction_mse<float>(vae, first_rows(data.test, 1000).all_images<float>());
  s.metric("vae/test_mse", mse);
  s.metric("vae/gamma", vae.gamma());
  s.log("test reconstruction mse " + fmt("%.5f", mse));
  return s.finish();
}

RunRecord cmd_train(const CommandOptions& o) {
  const ExperimentConfig c = resolve_config(o);
  Session s("train", c, o.quiet);
  const LoadedData data = load_data(c.dataset, c.seed);
  const std::unique_ptr<Vae<float>> codec =
      load_codec(c, trainer_needs_codec(c.train.trainer), "trainer " + std::string(to_string(c.train.trainer)));
  const Dataset eval = first_rows(data.test, c.metrics.eval_examples);
  const int epochs = c.train.resolved_epochs();
  s.log(std::string(to_string(c.train.trainer)) + " for " + std::to_string(epochs) + " epochs on " +
        std::to_string(data.train.size()) + " examples");
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochLog& e) {
    std::string line = "epoch " + std::to_string(e.epoch) + "/" + std::to_string(epochs) + " loss " + fmt("%.4f", e.loss);
    if (e.eval_accuracy) line += " test_acc " + fmt("%.4f", *e.eval_accuracy);
    s.log(line + " (" + fmt("%.1f", e.seconds) + "s)");
  };
  const TrainResult<float> r = train<float>(data.train, c.model, c.train, codec.get(), hooks, &eval);
  save_model(s.artifact("model", "model.ckpt"), r.model,
             {{"trainer", std::string(to_string(c.train.trainer))}, {"config_hash", s.config_hash()}});
  write_json(s.artifact("train_curve", "train_curve.json"), r.curve);
  std::ostringstream csv;
  csv.precision(10);
  csv << "epoch,loss,clean_loss,adv_loss,batches,ascent_batches,seconds,eval_accuracy\n";
  for (const EpochLog& e : r.curve)
    csv << e.epoch << "," << e.loss << "," << e.clean_loss << "," << e.adv_loss << "," << e.batches << ","
        << e.ascent_batches << "," << e.seconds << "," << (e.eval_accuracy ? fmt("%.10g", *e.eval_accuracy) : "")
        << "\n";
  write_text(s.artifact("train_curve_csv", "train_curve.csv"), csv.str());
  std::vector<double> xs, ys;
  for (const EpochLog& e : r.curve) {
    xs.push_back(e.epoch);
    ys.push_back(e.loss);
  }
  write_line_plot(s.artifact("train_curve_png", "train_curve.png"), {{"loss", xs, ys}});

  if (c.train.trainer == Trainer::kMixup || c.train.trainer == Trainer::kVarMixup || c.train.trainer == Trainer::kVarErm) {
    const Dataset shown = first_rows(data.train, 16);
    const Matrix<float> x = shown.all_images<float>();
    const Matrix<float> y = one_hot<float>(shown.labels(), shown.num_classes());
    Rng rng(derive_seed(c.seed, "sample-grid"));
    const MixPlan plan = draw_mix_plan(rng, x.rows(), c.train.mixup);
    Matrix<float> samples;
    if (c.train.trainer == Trainer::kMixup) samples = mixup_batch(x, y, plan).x;
    else if (c.train.trainer == Trainer::kVarMixup) samples = varmixup_batch(*codec, x, y, plan).x;
    else samples = codec->decode_mean(codec->encode_mean(x));
    write_image_grid(s.artifact("vicinal_samples", "vicinal_samples.png"), samples, shown.shape());
  }
  s.metric("train/final_loss", r.curve.back().loss);
  const double acc = accuracy(r.model, eval);
  s.metric("train/test_accuracy", acc);
  s.log("test accuracy " + fmt("%.4f", acc));
  return s.finish();
}

RunRecord cmd_attack(const CommandOptions& o) {
  const ExperimentConfig c = resolve_config(o);
  Session s("attack", c, o.quiet);
  const EvalContext ctx(c);
  const Predictor<float> plain = ctx.predictor(InferencePolicy{});
  const double clean = score(plain, ctx.eval.images(), ctx.eval.labels(), c.metrics.batch_size);
  for (const AttackProfile& a : c.attacks) {
    s.log("generating " + a.name);
    const AdversarialSet adv = ctx.attack(a);
    const double acc = score(plain, adv.images, adv.labels, c.metrics.batch_size);
    const double linf = (adv.images - ctx.eval.images()).cwiseAbs().maxCoeff();
    write_json(s.artifact("attack/" + a.name, "attacks/" + a.name + ".json"),
               {{"profile", a},
                {"hash", adv.hash},
                {"examples", ctx.eval.size()},
                {"clean_accuracy", clean},
                {"base_accuracy", acc},
                {"max_linf", linf}});
    write_image_grid(s.artifact("attack/" + a.name + "/png", "attacks/" + a.name + ".png"),
                     adv.images.topRows(std::min<Index>(16, adv.images.rows())), ctx.eval.shape());
    s.metric("attack/" + a.name + "/base_accuracy", acc);
    s.log(a.name + " base accuracy " + fmt("%.4f", acc) + " (clean " + fmt("%.4f", clean) + ")");
  }
  return s.finish();
}

RunRecord cmd_eval(const CommandOptions& o) {
  const ExperimentConfig c = resolve_config(o);
  Session s("eval", c, o.quiet);
  const EvalContext ctx(c);
  const MetricsToggles& m = c.metrics;

  const std::vector<AdversarialSet> sets = generate_all(ctx, s);
  nlohmann::json policies = nlohmann::json::array();
  for (const NamedPolicy& p : c.inference) {
    s.log("scoring policy " + p.name);
    const Predictor<float> predict = ctx.predictor(p.policy);
    RobustnessReport r;
    r.examples = ctx.eval.size();
    r.clean_accuracy = score(predict, ctx.eval.images(), ctx.eval.labels(), m.batch_size);
    for (std::size_t a = 0; a < sets.size(); ++a) {
      r.attack_accuracy[c.attacks[a].name] = score(predict, sets[a].images, sets[a].labels, m.batch_size);
      r.attack_hash[c.attacks[a].name] = sets[a].hash;
    }
    if (m.corruption) r.corruption = corruption_for(ctx, p.policy);
    nlohmann::json entry = {{"name", p.name}, {"policy", p.policy}, {"robustness", r}};
    std::optional<CalibrationReport> cal;
    if (m.calibration) {
      Matrix<float> probs(ctx.eval.size(), ctx.model.num_classes());
      for (Index first = 0; first < ctx.eval.size(); first += m.batch_size) {
        const Index n = std::min(m.batch_size, ctx.eval.size() - first);
        probs.middleRows(first, n) = defended_probs<float>(
            ctx.model, ctx.eval.images().middleRows(first, n), p.policy, ctx.codec.get(), ctx.pools.get(), first);
      }
      cal = ece_from_probs(probs, ctx.eval.labels(), m.ece_bins);
      entry["calibration"] = *cal;
    }
    write_metrics_csv(s.artifact("metrics/" + p.name, "metrics_" + p.name + ".csv"), r, cal ? &*cal : nullptr);
    merge_eval_metrics(s, p.name, r, cal ? &*cal : nullptr);
    std::string line = p.name + " clean " + fmt("%.4f", r.clean_accuracy);
    for (const auto& [name, acc] : r.attack_accuracy) line += " " + name + " " + fmt("%.4f", acc);
    s.log(line);
    policies.push_back(entry);
  }

  nlohmann::json report = {{"schema_version", kReportSchemaVersion},
                           {"config_hash", s.config_hash()},
                           {"dataset", {{"kind", c.dataset.kind}, {"examples", ctx.eval.size()}}},
                           {"attacks", c.attacks},
                           {"policies", policies}};
  if (m.linearity) {
    s.log("local linearity on " + std::to_string(std::min(m.linearity_examples, ctx.eval.size())) + " examples");
    const LinearityCurve curve = linearity_curve(ctx.model, first_rows(ctx.eval, m.linearity_examples), m.linearity_grid,
                                                 m.linearity_config, derive_seed(c.seed, "linearity"), m.batch_size);
    report["local_linearity"] = curve;
    for (std::size_t e = 0; e < curve.epsilons.size(); ++e)
      s.metric("eval/linearity/" + fmt("%.6g", curve.epsilons[e] * 255.0) + "/255", curve.mean_gamma[e]);
    std::vector<double> scaled;
    for (double e : curve.epsilons) scaled.push_back(e * 255.0);
    write_line_plot(s.artifact("linearity_png", "linearity.png"), {{"gamma", scaled, curve.mean_gamma}});
  }
  if (m.latent_stats) {
    const Dataset base = first_rows(ctx.data.train, m.latent_stat_samples);
    const Matrix<float> x = base.all_images<float>();
    const Matrix<float> y = one_hot<float>(base.labels(), base.num_classes());
    Rng rng(derive_seed(c.seed, "latent-stats"));
    MixupConfig mc;
    mc.eta = c.train.mixup.eta;
    const MixPlan plan = draw_mix_plan(rng, x.rows(), mc);
    const Matrix<float> mix = mixup_batch(x, y, plan).x;
    const Matrix<float> var = varmixup_batch(*ctx.codec, x, y, plan).x;
    const double dm = latent_stat_distance<float>(x, mix, *ctx.codec);
    const double dv = latent_stat_distance<float>(x, var, *ctx.codec);
    report["latent_stat_distance"] = {{"mixup_samples", dm}, {"varmixup_samples", dv}, {"note", kLatentStatNote}};
    s.metric("eval/latent_stat/mixup_samples", dm);
    s.metric("eval/latent_stat/varmixup_samples", dv);
    write_image_grid(s.artifact("samples_mixup", "samples_mixup.png"), mix.topRows(std::min<Index>(32, mix.rows())),
                     base.shape());
    write_image_grid(s.artifact("samples_varmixup", "samples_varmixup.png"),
                     var.topRows(std::min<Index>(32, var.rows())), base.shape());
    s.log("latent statistics distance mixup " + fmt("%.4f", dm) + " varmixup " + fmt("%.4f", dv));
  }
  write_json(s.artifact("report", "report.json"), report);
  if (o.sweep) {
    const SweepSpec spec = parse_sweep(*o.sweep);
    if (spec.parameter == "eta") throw ConfigError("an eta sweep retrains models; use the sweep subcommand");
    inference_sweep(s, ctx, spec);
  }
  return s.finish();
}

RunRecord cmd_corrupt_eval(const CommandOptions& o) {
  const ExperimentConfig c = resolve_config(o);
  Session s("corrupt-eval", c, o.quiet);
  const EvalContext ctx(c);
  nlohmann::json out = nlohmann::json::array();
  std::ostringstream csv;
  csv.precision(10);
  csv << "policy,kind,severity,accuracy\n";
  std::vector<PlotSeries> plot;
  for (const NamedPolicy& p : c.inference) {
    s.log("corruptions under " + p.name);
    const CorruptionResult r = corruption_for(ctx, p.policy);
    out.push_back({{"name", p.name}, {"policy", p.policy}, {"corruption", r}});
    for (std::size_t k = 0; k < r.kinds.size(); ++k) {
      PlotSeries ps{p.name + "/" + std::string(to_string(r.kinds[k])), {}, {}};
      for (int sev = 1; sev <= kNumSeverities; ++sev) {
        const double acc = r.accuracy[k][static_cast<std::size_t>(sev - 1)];
        csv << p.name << "," << to_string(r.kinds[k]) << "," << sev << "," << acc << "\n";
        ps.x.push_back(sev);
        ps.y.push_back(acc);
      }
      if (&p == &c.inference.front()) plot.push_back(ps);
    }
    s.metric("corrupt/" + p.name + "/mean", r.mean);
    s.log(p.name + " mean corruption accuracy " + fmt("%.4f", r.mean));
  }
  write_json(s.artifact("corruption", "corruption.json"),
             {{"config_hash", s.config_hash()}, {"examples", ctx.eval.size()}, {"policies", out}});
  write_text(s.artifact("corruption_csv", "corruption.csv"), csv.str());
  write_line_plot(s.artifact("corruption_png", "corruption.png"), plot);
  return s.finish();
}

RunRecord cmd_sweep(const CommandOptions& o) {
  if (!o.sweep) throw ConfigError("sweep needs --sweep name=values (lambda-mi, n-mi or eta)");
  const SweepSpec spec = parse_sweep(*o.sweep);
  const ExperimentConfig c = resolve_config(o);
  Session s("sweep", c, o.quiet);
  if (spec.parameter != "eta") {
    const EvalContext ctx(c);
    inference_sweep(s, ctx, spec);
    return s.finish();
  }
  const Trainer t = c.train.trainer;
  if (t == Trainer::kErm || t == Trainer::kVarErm || t == Trainer::kAt)
    throw ConfigError("an eta sweep needs a mixing trainer, not " + std::string(to_string(t)));
  const LoadedData data = load_data(c.dataset, c.seed);
  const Dataset eval = first_rows(data.test, c.metrics.eval_examples);
  const std::unique_ptr<Vae<float>> codec = load_codec(c, trainer_needs_codec(t) || needs_codec(c), "this sweep");
  const ClassPools pools(data.train);
  std::vector<SweepRow> rows;
  for (double eta : spec.values) {
    TrainConfig tc = c.train;
    tc.mixup.eta = eta;
    tc.validate();
    s.log("training " + std::string(to_string(t)) + " with eta " + fmt("%g", eta));
    const TrainResult<float> r = train<float>(data.train, c.model, tc, codec.get());
    save_model(s.artifact("model/eta=" + fmt("%g", eta), "models/eta-" + fmt("%g", eta) + ".ckpt"), r.model,
               {{"trainer", std::string(to_string(t))}, {"eta", eta}});
    std::vector<AdversarialSet> sets;
    for (const AttackProfile& a : c.attacks)
      sets.push_back(generate_adversarial<float>(r.model, eval, a, attack_seed(c, a), c.metrics.batch_size,
                                                 codec.get(), &pools));
    for (const NamedPolicy& p : c.inference) {
      const Predictor<float> predict = make_predictor<float>(r.model, p.policy, codec.get(), &pools);
      rows.push_back({eta, p.name, "clean", score(predict, eval.images(), eval.labels(), c.metrics.batch_size)});
      for (std::size_t a = 0; a < sets.size(); ++a)
        rows.push_back({eta, p.name, c.attacks[a].name,
                        score(predict, sets[a].images, sets[a].labels, c.metrics.batch_size)});
    }
  }
  write_sweep(s, spec.parameter, rows);
  return s.finish();
}

ComparisonTable cmd_report(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path& out_dir) {
  if (run_dirs.empty()) throw ConfigError("report needs at least one run directory");
  struct Row {
    std::string run, policy;
    double clean = 0;
    std::map<std::string, double> attacks;
  };
  std::vector<Row> rows;
  std::set<std::string> attack_names;
  for (const std::filesystem::path& dir : run_dirs) {
    if (!std::filesystem::is_directory(dir)) throw ConfigError("run directory " + dir.string() + " does not exist");
    if (!std::filesystem::exists(dir / kRunRecordFile))
      throw ConfigError("run directory " + dir.string() + " has no " + kRunRecordFile);
    const RunRecord rec = read_run_record(dir);
    std::map<std::string, Row> by_policy;
    for (const auto& [key, value] : rec.metrics) {
      if (key.rfind("eval/", 0) != 0) continue;
      const std::string rest = key.substr(5);
      const auto slash = rest.find('/');
      if (slash == std::string::npos) continue;
      const std::string policy = rest.substr(0, slash);
      const std::string what = rest.substr(slash + 1);
      if (policy == "linearity" || policy == "latent_stat") continue;
      Row& r = by_policy[policy];
      r.run = dir.lexically_normal().filename().empty() ? dir.lexically_normal().parent_path().filename().string()
                                                         : dir.lexically_normal().filename().string();
      r.policy = policy;
      if (what == "clean") r.clean = value;
      if (what.rfind("attack/", 0) == 0) {
        r.attacks[what.substr(7)] = value;
        attack_names.insert(what.substr(7));
      }
    }
    if (by_policy.empty()) throw ConfigError("run " + dir.string() + " has no eval metrics; run eval first");
    for (auto& [p, r] : by_policy) rows.push_back(r);
  }

  ComparisonTable t;
  t.columns = {"run", "policy", "clean"};
  t.columns.insert(t.columns.end(), attack_names.begin(), attack_names.end());
  std::ostringstream csv;
  csv.precision(10);
  for (std::size_t i = 0; i < t.columns.size(); ++i) csv << (i ? "," : "") << t.columns[i];
  csv << "\n";
  std::vector<std::vector<std::string>> cells{t.columns};
  for (const Row& r : rows) {
    std::vector<std::string> raw{r.run, r.policy, fmt("%.10g", r.clean)};
    std::vector<std::string> shown{r.run, r.policy, fmt("%.2f", 100.0 * r.clean)};
    for (const std::string& a : attack_names) {
      const auto it = r.attacks.find(a);
      raw.push_back(it == r.attacks.end() ? "" : fmt("%.10g", it->second));
      shown.push_back(it == r.attacks.end() ? "-"
                                            : fmt("%.2f", 100.0 * it->second) + " (" + fmt("%.2f", 100.0 * r.clean) + ")");
    }
    for (std::size_t i = 0; i < raw.size(); ++i) csv << (i ? "," : "") << raw[i];
    csv << "\n";
    t.rows.push_back(raw);
    cells.push_back(shown);
  }
  std::vector<std::size_t> width(t.columns.size(), 0);
  for (const auto& row : cells)
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  std::ostringstream text;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t i = 0; i < cells[r].size(); ++i) {
      text << (i ? "  " : "") << cells[r][i] << std::string(width[i] - cells[r][i].size(), ' ');
    }
    text << "\n";
    if (r == 0) {
      for (std::size_t i = 0; i < width.size(); ++i) text << (i ? "  " : "") << std::string(width[i], '-');
      text << "\n";
    }
  }
  t.csv = csv.str();
  t.text = text.str();
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_text(out_dir / "report.csv", t.csv);
    write_text(out_dir / "report.txt", t.text);
  }
  return t;
}

}  // namespace varmix

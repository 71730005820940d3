// Copyright 2026 The pdconv Authors.
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

#include "pdconv/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pdconv/clk.hpp"
#include "pdconv/gradcheck.hpp"
#include "pdconv/io.hpp"
#include "pdconv/network.hpp"
#include "pdconv/parallel.hpp"
#include "pdconv/pdc.hpp"
#include "pdconv/scene.hpp"
#include "pdconv/train.hpp"

namespace pdconv::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

/// Thrown for argument combinations CLI11 cannot validate on its own.
class UsageError : public Error {
 public:
  using Error::Error;
};

std::string fmt(double v, int precision = 6) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

fs::path sidecar_path(const fs::path& ckpt) {
  fs::path p = ckpt;
  p += ".json";
  return p;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckArgs {
  std::string op;
  std::string dtype = "f64";
  std::uint64_t seed = 0;
  bool list = false;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out, std::ostream& err) {
  const auto& suite = gradcheck_suite();
  if (a.list) {
    for (const auto& c : suite) out << c.name << "  " << c.description << '\n';
    return kOk;
  }
  std::vector<const GradCase*> cases;
  if (a.op.empty()) {
    for (const auto& c : suite) cases.push_back(&c);
  } else if (const GradCase* c = find_grad_case(a.op)) {
    cases.push_back(c);
  } else {
    err << "error: unknown op '" << a.op << "'; registered ops:";
    for (const auto& c : suite) err << ' ' << c.name;
    err << '\n';
    return kBadArgs;
  }
  int failed = 0;
  double worst = 0.0;
  for (const GradCase* c : cases) {
    const GradReport report = c->run(a.seed);
    for (const auto& line : report.lines()) out << line << '\n';
    worst = std::max(worst, report.max_error());
    if (!report.passed()) ++failed;
  }
  out << "gradcheck: ops=" << cases.size() << " failed=" << failed << " max_rel_err=" << fmt(worst, 3)
      << " tol=" << fmt(kGradTolerance) << " seed=" << a.seed << ' ' << (failed == 0 ? "PASS" : "FAIL") << '\n';
  return failed == 0 ? kOk : kCheckFailed;
}

// ---------------------------------------------------------------------------
// equivalence

int cmd_equivalence(int instances, std::uint64_t seed, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  const EquivalenceResult r = pdc_equivalence(instances, seed);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out << "equivalence: instances=" << r.instances << " seed=" << seed << '\n'
      << "  max_dev_f32=" << fmt(r.max_dev_f32, 3) << " (tol " << fmt(EquivalenceResult::kTolF32) << ")\n"
      << "  max_dev_f64=" << fmt(r.max_dev_f64, 3) << " (tol " << fmt(EquivalenceResult::kTolF64) << ")\n"
      << "  max_pointwise_f32=" << fmt(r.max_pointwise_f32, 3) << " max_pointwise_f64=" << fmt(r.max_pointwise_f64, 3)
      << " (informational)\n"
      << "  time=" << fmt(secs, 3) << "s " << (r.passed() ? "PASS" : "FAIL") << '\n';
  return r.passed() ? kOk : kCheckFailed;
}

// ---------------------------------------------------------------------------
// rfmap

int cmd_rfmap(const std::string& mode_name, const std::string& out_path, bool ascii, std::ostream& out) {
  const RfMode mode = *parse_rf_mode(mode_name);
  const SupportMap map = receptive_field(mode);
  const SupportMap analytic = analytic_support(mode);
  const bool match = map == analytic;
  const auto b = map.bounds();
  out << "rfmap: mode=" << to_string(mode) << " extent=" << map.extent_h() << 'x' << map.extent_w()
      << " bounds=[" << b.top << ',' << b.left << "]..[" << b.bottom << ',' << b.right << "]"
      << " holes=" << map.holes() << " analytic=" << (match ? "match" : "MISMATCH") << '\n';
  if (ascii) out << render_ascii(map);
  if (!out_path.empty()) {
    std::vector<std::int32_t> values(map.counts.begin(), map.counts.end());
    const auto side = static_cast<std::uint32_t>(map.side());
    write_pdt(out_path, to_raw<std::int32_t>(values, {side, side}));
    out << "wrote " << out_path << '\n';
  }
  return match ? kOk : kCheckFailed;
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs {
  std::vector<int> sizes{32, 64};
  std::vector<int> channels{8};
  int repeats = 3;
  int threads = 0;
  std::uint64_t seed = 0;
};

template <typename Fn>
double best_seconds(int repeats, Fn&& fn) {
  double best = std::numeric_limits<double>::infinity();
  for (int r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  return best;
}

int cmd_bench(const BenchArgs& a, std::ostream& out) {
  if (a.threads > 0) set_thread_count(a.threads);
  out << "bench: threads=" << thread_count() << " repeats=" << a.repeats << " (best of)\n";
  out << std::left << std::setw(14) << "op" << std::right << std::setw(6) << "size" << std::setw(7) << "C"
      << std::setw(14) << "MACs" << std::setw(12) << "time_ms" << std::setw(12) << "GMAC/s" << '\n';
  bool cheaper = true;
  for (int size : a.sizes) {
    for (int c : a.channels) {
      Rng rng(derive_seed(a.seed, static_cast<std::uint64_t>(size) * 100003u + static_cast<std::uint64_t>(c)));
      const Tensor<float> x = random_uniform<float>(Shape{1, c, size, size}, rng);
      const std::int64_t hw = static_cast<std::int64_t>(size) * size;
      const std::int64_t chw = c * hw;

      const ConvSpec dense3 = ConvSpec::dense(3);
      const ConvWeights<float> w3{random_uniform<float>(Shape{c, c, 3, 3}, rng), std::nullopt};
      const ConvSpec dw21 = ConvSpec::depthwise(21, 1, c);
      const ConvWeights<float> w21{random_uniform<float>(Shape{c, 1, 21, 21}, rng), std::nullopt};
      const ConvWeights<float> w1{random_uniform<float>(Shape{c, c, 1, 1}, rng), std::nullopt};
      const ClkLayer<float> clk = ClkLayer<float>::make(c, rng);
      const PdcKernel<float> pdc = PdcKernel<float>::make(c, kLocalKernel, kLocalDilation, rng);
      const CpdcLayer<float> cpdc = CpdcLayer<float>::make(c, rng);

      struct Row {
        std::string op;
        std::int64_t macs;
        double secs;
      };
      std::vector<Row> rows;
      rows.push_back({"conv2d_3x3", flop_count(dense3, c, c, size, size),
                      best_seconds(a.repeats, [&] { (void)conv2d(x, w3, dense3); })});
      rows.push_back({"dw21+pw", large_kernel_flops(c, size, size, 21), best_seconds(a.repeats, [&] {
                        (void)pointwise_conv(conv2d(x, w21, dw21), w1);
                      })});
      rows.push_back({"clk", clk_flops(c, size, size), best_seconds(a.repeats, [&] { (void)clk_forward(x, clk); })});
      // PDC adds one multiply-add per output for the alpha * x(p0) * sum(w) term.
      rows.push_back({"pdc5", flop_count(ConvSpec::depthwise(kLocalKernel, kLocalDilation, c), c, c, size, size) + chw,
                      best_seconds(a.repeats, [&] {
                        (void)eval_no_grad<float>([&] { return pdc_forward(Var<float>::constant(x), pdc); });
                      })});
      // Two PDC corrections plus the gating product.
      rows.push_back({"cpdc", clk_flops(c, size, size) + 3 * chw,
                      best_seconds(a.repeats, [&] { (void)cpdc_forward(x, cpdc); })});
      for (const auto& r : rows) {
        out << std::left << std::setw(14) << r.op << std::right << std::setw(6) << size << std::setw(7) << c
            << std::setw(14) << r.macs << std::setw(12) << std::fixed << std::setprecision(3) << r.secs * 1e3
            << std::setw(12) << (r.secs > 0 ? static_cast<double>(r.macs) / r.secs / 1e9 : 0.0)
            << std::defaultfloat << std::setprecision(6) << '\n';
      }
      const bool ok = clk_flops(c, size, size) < large_kernel_flops(c, size, size, 21);
      cheaper = cheaper && ok;
    }
  }
  out << "clk vs dw21+pw: " << (cheaper ? "clk cheaper at every size" : "CLK NOT CHEAPER") << '\n';
  return cheaper ? kOk : kCheckFailed;
}

// ---------------------------------------------------------------------------
// gen

struct GenArgs {
  std::string out;
  int count = 0;
  std::uint64_t seed = 0;
  std::string config;
  int height = 0;
  int width = 0;
  int classes = 0;
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
  GenConfig cfg;
  if (!a.config.empty()) cfg = RunConfig::load(a.config).generator;
  if (a.height > 0) cfg.height = a.height;
  if (a.width > 0) cfg.width = a.width;
  if (a.classes > 0) cfg.num_classes = a.classes;
  cfg.validate();
  const Dataset data = generate_dataset(a.seed, a.count, cfg);
  write_dataset(a.out, data);
  out << "gen: wrote " << data.samples.size() << " scenes " << cfg.height << 'x' << cfg.width << " M=" << cfg.num_classes
      << " seed=" << a.seed << " to " << a.out << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string config;
  std::string data;
  std::string val;
  std::string ckpt = "run.pdck";
  std::string log;
  std::string variant;
  int epochs = 0;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig rc = RunConfig::load(a.config);
  if (!a.variant.empty()) rc.model.variant = *parse_variant(a.variant);
  if (a.epochs > 0) rc.train.epochs = a.epochs;
  if (a.seed) {
    rc.seed = *a.seed;
    rc.train.seed = *a.seed;
  }
  const Dataset data = read_dataset(a.data);
  if (rc.model_classes_set && rc.model.num_classes != data.num_classes) {
    throw UsageError("model.num_classes=" + std::to_string(rc.model.num_classes) + " but dataset has M=" +
                     std::to_string(data.num_classes));
  }
  rc.model.num_classes = data.num_classes;
  rc.model.validate();

  Dataset train_set;
  Dataset val_set;
  if (!a.val.empty()) {
    train_set = data;
    val_set = read_dataset(a.val);
    if (val_set.num_classes != data.num_classes) throw UsageError("validation set has a different class count");
  } else {
    std::tie(train_set, val_set) = split_dataset(data, rc.train.val_fraction);
  }

  const fs::path ckpt = a.ckpt;
  fs::path log_path = a.log;
  if (log_path.empty()) log_path = fs::path(ckpt).replace_extension(".jsonl");

  ToyPdcNet<float> net(rc.model, rc.seed);
  out << "train: variant=" << to_string(rc.model.variant) << " params=" << net.parameter_count()
      << " train=" << train_set.samples.size() << " val=" << val_set.samples.size() << " epochs=" << rc.train.epochs
      << " threads=" << thread_count() << '\n';
  std::string log_text;
  const auto logs = train(net, train_set, val_set, rc.train, [&](const EpochLog& e) {
    log_text += e.to_json().dump() + '\n';
    write_text_atomic(log_path, log_text);
    out << "epoch " << e.epoch << " iter=" << e.iter << " lr=" << fmt(e.lr, 4) << " loss=" << fmt(e.loss, 5)
        << std::flush;
    if (!std::isnan(e.pix_acc)) out << " val_pix_acc=" << fmt(e.pix_acc, 4) << " val_miou=" << fmt(e.miou, 4);
    out << '\n' << std::flush;
  });

  write_checkpoint(ckpt, net.state());
  ordered_json side = {{"variant", to_string(rc.model.variant)},
                       {"num_classes", data.num_classes},
                       {"height", data.height},
                       {"width", data.width},
                       {"config", rc.to_json()}};
  if (!logs.empty()) side["final"] = logs.back().to_json();
  write_text_atomic(sidecar_path(ckpt), side.dump(2) + '\n');
  out << "wrote " << ckpt.string() << ", " << sidecar_path(ckpt).string() << ", " << log_path.string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string variant;
  bool dump_params = false;
  int batch = 8;
};

nlohmann::json iou_json(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto entries = read_checkpoint(a.ckpt);
  const fs::path side_path = sidecar_path(a.ckpt);
  const auto side_bytes = read_file(side_path);
  nlohmann::json side;
  try {
    side = nlohmann::json::parse(std::string(reinterpret_cast<const char*>(side_bytes.data()), side_bytes.size()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(side_path.string() + ": " + e.what());
  }
  if (!side.is_object() || !side.contains("config") || !side.contains("variant")) {
    throw FormatError(side_path.string() + ": missing 'config' or 'variant'");
  }
  RunConfig rc;
  try {
    rc = RunConfig::from_json(side.at("config"));
  } catch (const ConfigError& e) {
    throw FormatError(side_path.string() + ": " + e.what());
  }
  const std::string trained = to_string(rc.model.variant);
  if (!a.variant.empty() && a.variant != trained) {
    throw UsageError("checkpoint was trained as variant '" + trained + "', not '" + a.variant + "'");
  }
  ToyPdcNet<float> net(rc.model, rc.seed);
  net.load_state(entries);

  const Dataset data = read_dataset(a.data);
  if (data.num_classes != rc.model.num_classes) {
    throw UsageError("dataset has M=" + std::to_string(data.num_classes) + " but checkpoint has M=" +
                     std::to_string(rc.model.num_classes));
  }
  const ConfusionMatrix cm = evaluate(net, data, a.batch);
  ordered_json result;
  result["variant"] = trained;
  result["pixel_acc"] = cm.pixel_accuracy();
  result["miou"] = cm.mean_iou();
  nlohmann::json per_class = nlohmann::json::array();
  for (double v : cm.class_iou()) per_class.push_back(iou_json(v));
  result["per_class_iou"] = per_class;
  if (a.dump_params) {
    ordered_json params;
    for (int s = 0; s < 3; ++s) {
      auto& ecf = net.ecf(s);
      params["ecf" + std::to_string(s + 1)] = {{"eta", static_cast<double>(ecf.eta.value()[0])},
                                               {"lambda", static_cast<double>(ecf.lambda.value()[0])}};
    }
    ordered_json alphas;
    for (auto [name, branch] : {std::pair{"rgb", &net.rgb_branch()}, std::pair{"depth", &net.depth_branch()}}) {
      for (int s = 0; s < 3; ++s) {
        const auto& kernels = branch->context[static_cast<std::size_t>(s)].kernels;
        for (std::size_t k = 0; k < kernels.size(); ++k) {
          const std::string key = std::string(name) + ".stage" + std::to_string(s + 1) + ".context." +
                                  (k == 0 ? "pdc5" : "pdc7");
          alphas[key] = alpha_value(kernels[k]);
        }
      }
    }
    params["alpha"] = alphas;
    result["params"] = params;
  }
  out << result.dump(2) << '\n';
  return kOk;
}

std::string join(const std::vector<std::string>& v, const char* sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + v[i];
  return s;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"pdconv: pixel difference convolution operators, verification and toy training"};
  app.name("pdconv");
  app.require_subcommand(1);
  app.set_version_flag("--version", "pdconv 0.1.0");

  std::vector<std::string> op_names;
  for (const auto& c : gradcheck_suite()) op_names.push_back(c.name);
  std::vector<std::string> rf_names{"single5", "single7d3", "cascade", "parallel", "cpdc"};

  GradcheckArgs ga;
  auto* gc = app.add_subcommand("gradcheck", "Central-difference gradient check of the registered ops");
  gc->add_option("--op", ga.op, "Check one op only (" + join(op_names, ", ") + ")");
  gc->add_option("--dtype", ga.dtype, "Floating type of the check")->check(CLI::IsMember({"f64"}));
  gc->add_option("--seed", ga.seed, "Seed for inputs and sampled coordinates");
  gc->add_flag("--list", ga.list, "List the registered ops and exit");

  int eq_instances = 200;
  std::uint64_t eq_seed = 0;
  auto* eq = app.add_subcommand("equivalence", "Cross-check definitional and rewritten PDC forms");
  eq->add_option("--seeds", eq_instances, "Number of random PDC instances")->check(CLI::Range(1, 1000000));
  eq->add_option("--seed", eq_seed, "Base seed");

  std::string rf_mode;
  std::string rf_out;
  bool rf_ascii = false;
  auto* rf = app.add_subcommand("rfmap", "Measure the receptive-field support of a context operator");
  rf->add_option("--mode", rf_mode, "Operator")->required()->check(CLI::IsMember(rf_names));
  rf->add_option("--out", rf_out, "Write the usage counts as an i32 .pdt tensor");
  rf->add_flag("--ascii", rf_ascii, "Print an ASCII heat map");

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "Time conv2d / CLK / PDC / CPDC and report MACs");
  bench->add_option("--sizes", ba.sizes, "Square map sizes, comma separated")
      ->delimiter(',')
      ->check(CLI::Range(1, 4096));
  bench->add_option("--channels", ba.channels, "Channel counts, comma separated")
      ->delimiter(',')
      ->check(CLI::Range(1, 65536));
  bench->add_option("--repeats", ba.repeats, "Timed repetitions per row")->check(CLI::Range(1, 1000));
  bench->add_option("--threads", ba.threads, "Thread count (default PDCONV_THREADS or all cores)")
      ->check(CLI::Range(1, 4096));
  bench->add_option("--seed", ba.seed, "Seed for inputs and weights");

  GenArgs gen_args;
  auto* gen = app.add_subcommand("gen", "Generate a synthetic RGB-D segmentation dataset");
  gen->add_option("--out", gen_args.out, "Output directory")->required();
  gen->add_option("--count", gen_args.count, "Number of scenes")->required()->check(CLI::Range(1, 10000000));
  gen->add_option("--seed", gen_args.seed, "Dataset seed")->required();
  gen->add_option("--config", gen_args.config, "Run config whose 'generator' section is used");
  gen->add_option("--height", gen_args.height, "Override scene height")->check(CLI::Range(8, 4096));
  gen->add_option("--width", gen_args.width, "Override scene width")->check(CLI::Range(8, 4096));
  gen->add_option("--classes", gen_args.classes, "Override class count M")->check(CLI::Range(2, kMaxClasses));

  TrainArgs ta;
  std::uint64_t train_seed = 0;
  auto* tr = app.add_subcommand("train", "Train the toy network and write a checkpoint");
  tr->add_option("--config", ta.config, "Run config (JSON)")->required();
  tr->add_option("--data", ta.data, "Dataset directory")->required();
  tr->add_option("--val", ta.val, "Validation dataset (default: split off the training data)");
  tr->add_option("--ckpt,--out", ta.ckpt, "Checkpoint path")->capture_default_str();
  tr->add_option("--log", ta.log, "JSONL log path (default: checkpoint with .jsonl)");
  tr->add_option("--variant", ta.variant, "Override model.variant")->check(CLI::IsMember(variant_names()));
  tr->add_option("--epochs", ta.epochs, "Override train.epochs")->check(CLI::Range(1, 100000));
  auto* seed_opt = tr->add_option("--seed", train_seed, "Override the run seed");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint and print metrics as JSON");
  ev->add_option("--ckpt", ea.ckpt, "Checkpoint path")->required();
  ev->add_option("--data", ea.data, "Dataset directory")->required();
  ev->add_option("--variant", ea.variant, "Expected variant of the checkpoint")
      ->check(CLI::IsMember(variant_names()));
  ev->add_flag("--dump-params", ea.dump_params, "Include eta, lambda and alpha values");
  ev->add_option("--batch", ea.batch, "Evaluation batch size")->check(CLI::Range(1, 4096));

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kBadArgs;
  }

  try {
    if (gc->parsed()) return cmd_gradcheck(ga, out, err);
    if (eq->parsed()) return cmd_equivalence(eq_instances, eq_seed, out);
    if (rf->parsed()) return cmd_rfmap(rf_mode, rf_out, rf_ascii, out);
    if (bench->parsed()) return cmd_bench(ba, out);
    if (gen->parsed()) return cmd_gen(gen_args, out);
    if (tr->parsed()) {
      if (seed_opt->count() > 0) ta.seed = train_seed;
      return cmd_train(ta, out);
    }
    if (ev->parsed()) return cmd_eval(ea, out);
  } catch (const DivergenceError& e) {
    err << "error: training diverged at iteration " << e.iteration() << ": " << e.what() << '\n';
    return kDiverged;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kFileError;
  } catch (const FormatError& e) {
    err << "error: corrupted file: " << e.what() << '\n';
    return kFileError;
  } catch (const DataError& e) {
    err << "error: invalid data: " << e.what() << '\n';
    return kFileError;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kBadArgs;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kBadArgs;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kCheckFailed;
  }
  return kBadArgs;
}

}  // namespace pdconv::cli

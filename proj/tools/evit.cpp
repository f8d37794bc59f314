// Copyright 2026 The evit Authors. All Rights Reserved.
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

// Command-line front end: verification, benchmarks, cost tables, demo
// segmentation and checkpoint generation.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "evit/evit.hpp"

namespace {

struct Resolution {
  std::size_t height = 0;
  std::size_t width = 0;
};

Resolution parse_resolution(const std::string& text) {
  const auto x = text.find('x');
  try {
    if (x == std::string::npos) {
      const auto side = std::stoul(text);
      return {side, side};
    }
    return {std::stoul(text.substr(0, x)), std::stoul(text.substr(x + 1))};
  } catch (const std::exception&) {
    throw evit::InputError("cannot parse resolution '" + text + "' (expected R or HxW)");
  }
}

std::size_t default_classes(evit::Task::Kind kind) {
  return kind == evit::Task::Kind::segmentation ? 19 : 1000;
}

std::string human(double v) {
  char buf[32];
  if (v >= 1e9) {
    std::snprintf(buf, sizeof buf, "%.2fG", v / 1e9);
  } else if (v >= 1e6) {
    std::snprintf(buf, sizeof buf, "%.2fM", v / 1e6);
  } else if (v >= 1e3) {
    std::snprintf(buf, sizeof buf, "%.1fK", v / 1e3);
  } else {
    std::snprintf(buf, sizeof buf, "%.0f", v);
  }
  return buf;
}

int cmd_verify(std::uint64_t seed, std::size_t max_n, float eps) {
  if (max_n == 0) throw evit::InputError("--max-n must be >= 1");
  if (eps < 0.0f) throw evit::InputError("--eps must be >= 0");
  evit::verify::Options opt;
  opt.seed = seed;
  opt.max_n = max_n;
  opt.eps = eps;
  const auto report = evit::verify::run(opt);
  const evit::verify::PropertyResult* first_failure = nullptr;
  for (const auto& p : report.properties) {
    const char* tag = p.diagnostic ? (p.passed ? "[INFO]" : "[XFAIL]") : (p.passed ? "[PASS]" : "[FAIL]");
    std::printf("%-7s %s: worst %.3g (tolerance %.3g; %s; %zu samples, worst seed %llu)\n", tag, p.name.c_str(),
                p.worst, p.tolerance, p.metric.c_str(), p.samples, static_cast<unsigned long long>(p.worst_seed));
    if (!p.diagnostic && !p.passed && !first_failure) first_failure = &p;
  }
  if (first_failure) {
    std::fprintf(stderr, "verify failed: %s (worst-case input seed %llu)\n", first_failure->name.c_str(),
                 static_cast<unsigned long long>(first_failure->worst_seed));
    return 1;
  }
  std::printf("all properties within tolerance\n");
  return 0;
}

int cmd_bench(const std::vector<std::string>& kinds, const std::vector<std::size_t>& ns, std::size_t d,
              std::size_t heads, std::size_t warmup, std::size_t repeats, std::uint64_t seed,
              const std::string& out) {
  std::vector<evit::bench::BenchRecord> all;
  std::map<std::string, double> slopes;
  evit::bench::ScalingOptions opt{warmup, repeats, seed};
  for (const auto& name : kinds) {
    const auto kind = evit::parse_attention_kind(name);
    const auto records = evit::bench::scaling_experiment(kind, ns, d, heads, opt);
    for (const auto& r : records) {
      std::printf("%-10s N=%-6zu d=%-3zu heads=%zu median=%.3f ms macs=%s\n", name.c_str(), r.n, r.d, r.heads,
                  static_cast<double>(r.median_ns) / 1e6, human(static_cast<double>(r.macs)).c_str());
    }
    if (records.size() >= 4) slopes[name] = evit::bench::fit_loglog_slope(records);
    all.insert(all.end(), records.begin(), records.end());
  }
  evit::bench::write_csv(all, out);
  for (const auto& [name, slope] : slopes) std::printf("slope %-10s %.3f\n", name.c_str(), slope);
  if (ns.size() < 4) std::printf("slope: need at least 4 token counts to fit\n");
  std::printf("wrote %zu records to %s\n", all.size(), out.c_str());
  return 0;
}

int cmd_macs(const std::string& variant, const std::string& task_name, const std::string& res,
             std::optional<std::size_t> classes) {
  const auto kind = evit::parse_task_kind(task_name);
  const evit::Task task{kind, classes.value_or(default_classes(kind))};
  const Resolution r = parse_resolution(res);
  const auto model = evit::build_model(variant, task);
  const auto report = evit::cost_report(model, r.height, r.width);
  std::printf("EfficientViT-%s %s (%zu classes) at %zux%zu\n", variant.c_str(), std::string(to_string(kind)).c_str(),
              task.n_classes, r.height, r.width);
  std::printf("%-8s %14s %18s\n", "part", "params", "MACs");
  for (const auto& p : report.parts) {
    std::printf("%-8s %14llu %18llu\n", p.name.c_str(), static_cast<unsigned long long>(p.params),
                static_cast<unsigned long long>(p.macs));
  }
  const double params = static_cast<double>(report.total_params());
  const double macs = static_cast<double>(report.total_macs());
  std::printf("%-8s %14llu %18llu   (%s params, %s MACs)\n", "total", static_cast<unsigned long long>(report.total_params()),
              static_cast<unsigned long long>(report.total_macs()), human(params).c_str(), human(macs).c_str());
  if (const auto ref = evit::find_reference(variant, task, r.height, r.width)) {
    const double pg = evit::relative_gap(params, ref->params);
    const double mg = evit::relative_gap(macs, ref->macs);
    std::printf("reference params %s: %+.1f%% -> %s (tolerance +-%.0f%%)\n", human(ref->params).c_str(), 100 * pg,
                std::fabs(pg) <= evit::kParamTolerance ? "within" : "outside", 100 * evit::kParamTolerance);
    std::printf("reference MACs   %s: %+.1f%% -> %s (tolerance +-%.0f%%)\n", human(ref->macs).c_str(), 100 * mg,
                std::fabs(mg) <= evit::kMacTolerance ? "within" : "outside", 100 * evit::kMacTolerance);
  } else {
    std::printf("no published reference for this configuration\n");
  }
  return 0;
}

int cmd_infer(const std::string& variant, const std::string& ckpt_path, const std::string& image_path,
              std::size_t classes, const std::string& out) {
  const auto model = evit::build_model(variant, evit::Task::segmentation(classes));
  const auto ckpt = evit::load_checkpoint(ckpt_path);
  evit::validate_checkpoint(model, ckpt);
  const auto image = evit::load_ppm(image_path);
  evit::check_input(image);
  const auto logits = evit::forward(model, ckpt, image);
  const auto labels = evit::argmax_classes(logits);
  evit::save_pgm(labels, out);
  std::printf("wrote %zux%zu class map to %s\n", labels.width, labels.height, out.c_str());
  return 0;
}

int cmd_init(const std::string& variant, const std::string& task_name, std::optional<std::size_t> classes,
             std::uint64_t seed, const std::string& out) {
  const auto kind = evit::parse_task_kind(task_name);
  const auto model = evit::build_model(variant, {kind, classes.value_or(default_classes(kind))});
  const auto ckpt = evit::init_weights(model, seed);
  evit::save_checkpoint(ckpt, out);
  std::printf("wrote %zu tensors (%llu parameters) to %s\n", ckpt.size(),
              static_cast<unsigned long long>(evit::count_params(model)), out.c_str());
  return 0;
}

int cmd_dump_config(const std::string& variant) {
  const auto v = evit::variant_config(variant);
  static const char* parts[] = {"stem", "stage1", "stage2", "stage3", "stage4"};
  static const char* strides[] = {"H/2", "H/4", "H/8", "H/16", "H/32"};
  std::printf("EfficientViT-%s\n", v.name.c_str());
  for (std::size_t i = 0; i < 5; ++i) std::printf("%-7s %-5s C=%zu L=%zu\n", parts[i], strides[i], v.widths[i], v.depths[i]);
  std::printf("%-7s %-5s C=%zu L=%zu\n", "head", "H/8", v.head_width, v.head_depth);
  std::printf("C=(%zu,%zu,%zu,%zu,%zu)\n", v.widths[0], v.widths[1], v.widths[2], v.widths[3], v.widths[4]);
  std::printf("L=(%zu,%zu,%zu,%zu,%zu)\n", v.depths[0], v.depths[1], v.depths[2], v.depths[3], v.depths[4]);
  std::printf("attention d=%zu scales=", v.attention_dim);
  for (std::size_t i = 0; i < v.scales.size(); ++i) std::printf("%s%zu", i ? "," : "", v.scales[i]);
  std::printf(" mbconv expand=%zu\n", v.expand_ratio);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lightweight multi-scale attention: verification, benchmarks and inference"};
  app.require_subcommand(1);

  auto* verify = app.add_subcommand("verify", "check linear vs quadratic attention, invariances and gradients");
  std::uint64_t verify_seed = 0;
  std::size_t max_n = 256;
  float eps = 1e-6f;
  verify->add_option("--seed", verify_seed, "base seed for random draws");
  verify->add_option("--max-n", max_n, "largest token count exercised");
  verify->add_option("--eps", eps, "denominator guard for ReLU attention");

  auto* bench = app.add_subcommand("bench", "time attention kinds across token counts");
  std::vector<std::string> kinds{"softmax", "relu_fast"};
  std::vector<std::size_t> ns{256, 512, 1024, 2048, 4096, 8192};
  std::size_t d = 32, heads = 1, warmup = 3, repeats = 11;
  std::uint64_t bench_seed = 0;
  std::string bench_out = "bench.csv";
  bench->add_option("--kinds", kinds, "softmax, relu_fast, relu_naive")->delimiter(',');
  bench->add_option("--ns", ns, "token counts, strictly increasing, each >= 64")->delimiter(',');
  bench->add_option("--d", d, "per-head dimension");
  bench->add_option("--heads", heads, "head count");
  bench->add_option("--warmup", warmup, "untimed runs per point");
  bench->add_option("--repeats", repeats, "timed runs per point");
  bench->add_option("--seed", bench_seed, "input seed");
  bench->add_option("--out", bench_out, "CSV output path");

  auto* macs = app.add_subcommand("macs", "per-stage parameter and MAC counts");
  std::string macs_variant = "B1", macs_task = "cls", macs_res = "224";
  std::optional<std::size_t> macs_classes;
  macs->add_option("--variant", macs_variant, "B0..B3");
  macs->add_option("--task", macs_task, "seg or cls");
  macs->add_option("--res", macs_res, "R or HxW, divisible by 32");
  macs->add_option("--classes", macs_classes, "class count (default 19 seg, 1000 cls)");

  auto* infer = app.add_subcommand("infer", "segment a P6 image into a P5 class map");
  std::string infer_variant = "B0", infer_ckpt, infer_image, infer_out = "out.pgm";
  std::size_t infer_classes = 19;
  infer->add_option("--variant", infer_variant, "B0..B3");
  infer->add_option("--ckpt", infer_ckpt, "LMA1 checkpoint")->required();
  infer->add_option("--image", infer_image, "binary P6 image, sides divisible by 32")->required();
  infer->add_option("--classes", infer_classes, "class count");
  infer->add_option("--out", infer_out, "P5 output path");

  auto* init = app.add_subcommand("init", "write a deterministically initialised checkpoint");
  std::string init_variant = "B0", init_task = "seg", init_out;
  std::optional<std::size_t> init_classes;
  std::uint64_t init_seed = 0;
  init->add_option("--variant", init_variant, "B0..B3");
  init->add_option("--task", init_task, "seg or cls");
  init->add_option("--classes", init_classes, "class count (default 19 seg, 1000 cls)");
  init->add_option("--seed", init_seed, "initialisation seed");
  init->add_option("--out", init_out, "LMA1 output path")->required();

  auto* dump = app.add_subcommand("dump-config", "print the width/depth table of a variant");
  std::string dump_variant = "B0";
  dump->add_option("--variant", dump_variant, "B0..B3");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*verify) return cmd_verify(verify_seed, max_n, eps);
    if (*bench) return cmd_bench(kinds, ns, d, heads, warmup, repeats, bench_seed, bench_out);
    if (*macs) return cmd_macs(macs_variant, macs_task, macs_res, macs_classes);
    if (*infer) return cmd_infer(infer_variant, infer_ckpt, infer_image, infer_classes, infer_out);
    if (*init) return cmd_init(init_variant, init_task, init_classes, init_seed, init_out);
    if (*dump) return cmd_dump_config(dump_variant);
  } catch (const evit::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}

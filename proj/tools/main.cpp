// sggan: corpus generation, training, inference, evaluation and gradient checks.
//
// Exit codes: 0 success, 1 validation error, 2 runtime or numeric failure.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sggan/data_synth.hpp"
#include "sggan/evaluation.hpp"
#include "sggan/gradcheck.hpp"
#include "sggan/image_io.hpp"
#include "sggan/networks.hpp"
#include "sggan/trainer.hpp"

namespace fs = std::filesystem;
using namespace sggan;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;

std::pair<std::size_t, std::size_t> parse_size(const std::string& s) {
  const auto x = s.find_first_of("xX");
  if (x == std::string::npos) throw std::invalid_argument("--size must look like HxW, got '" + s + "'");
  std::size_t h = 0, w = 0;
  try {
    std::size_t used = 0;
    h = std::stoul(s.substr(0, x), &used);
    if (used != x) throw std::invalid_argument("");
    const std::string ws = s.substr(x + 1);
    w = std::stoul(ws, &used);
    if (used != ws.size()) throw std::invalid_argument("");
  } catch (const std::exception&) {
    throw std::invalid_argument("--size must look like HxW, got '" + s + "'");
  }
  return {h, w};
}

// PNG files of a directory in name order; a corpus directory contributes its images/ subfolder.
std::vector<fs::path> list_pngs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::invalid_argument("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  }
  if (out.empty() && fs::is_directory(dir / "images")) return list_pngs(dir / "images");
  std::sort(out.begin(), out.end());
  return out;
}

// Images of a corpus directory, via its manifest when present.
std::vector<fs::path> corpus_images(const fs::path& dir) {
  if (fs::exists(dir / "manifest.txt")) {
    std::vector<fs::path> out;
    for (const ManifestEntry& e : read_manifest(dir.string())) out.push_back(dir / e.image_path);
    return out;
  }
  return list_pngs(dir);
}

std::vector<fs::path> corpus_labels(const fs::path& dir) {
  if (fs::exists(dir / "manifest.txt")) {
    std::vector<fs::path> out;
    for (const ManifestEntry& e : read_manifest(dir.string())) out.push_back(dir / e.label_path);
    return out;
  }
  if (fs::is_directory(dir / "labels")) return list_pngs(dir / "labels");
  return list_pngs(dir);
}

int cmd_gen(const std::string& out, const std::string& domain, std::size_t count, const std::string& size,
            std::uint64_t seed, int classes) {
  if (domain != "virtual" && domain != "real") {
    throw std::invalid_argument("--domain must be virtual or real, got '" + domain + "'");
  }
  const auto [h, w] = parse_size(size);
  const DomainSpec spec = domain == "virtual" ? virtual_spec(classes) : real_spec(classes);
  write_corpus(out, domain, spec, count, h, w, seed);
  std::printf("wrote %zu %s scenes of %zux%zu to %s\n", count, domain.c_str(), h, w,
              (fs::path(out) / domain).string().c_str());
  return kOk;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& virtual_dir, const std::string& real_dir, const std::string& out,
              const std::string& resume) {
  TrainConfig cfg = config_path.empty() ? TrainConfig{} : load_config_file(config_path);
  std::vector<std::string> problems;
  for (const std::string& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      problems.push_back("--set expects key=value, got '" + kv + "'");
      continue;
    }
    try {
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    } catch (const ConfigError& e) {
      problems.insert(problems.end(), e.problems().begin(), e.problems().end());
    }
  }
  cfg.metrics_path = (fs::path(out) / "metrics.csv").string();
  cfg.checkpoint_dir = (fs::path(out) / "checkpoints").string();
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    problems.insert(problems.end(), e.problems().begin(), e.problems().end());
  }
  if (!problems.empty()) throw ConfigError(problems);

  fs::create_directories(out);
  std::ofstream(fs::path(out) / "config.txt") << cfg.to_text();
  const Corpus v = load_corpus(virtual_dir, cfg.num_classes);
  const Corpus r = load_corpus(real_dir, cfg.num_classes);
  std::optional<TrainState> state;
  if (!resume.empty()) state = checkpoint_load(resume);
  const long total = static_cast<long>(cfg.epochs) * steps_per_epoch(cfg, v.scenes.size(), r.scenes.size());
  TrainResult result = run_training(cfg, v.scenes, r.scenes, std::move(state), [&](const MetricRow& row) {
    if (row.step % 50 == 0 || row.step == total) {
      std::printf("step %ld/%ld epoch %d total %.4f cycle %.4f grad %.4f\n", row.step, total, row.epoch,
                  row.losses.total, row.losses.cycle, row.losses.grad_sens);
      std::fflush(stdout);
    }
  });
  const std::string gen_path = (fs::path(out) / "generators.sggn").string();
  save_generators(gen_path, GeneratorPair{result.state.g_v2r, result.state.g_r2v});
  std::printf("trained %ld steps; generators in %s\n", result.state.step, gen_path.c_str());
  return kOk;
}

int cmd_adapt(const std::string& checkpoint, const std::string& in, const std::string& out,
              const std::string& direction) {
  if (direction != "v2r" && direction != "r2v") {
    throw std::invalid_argument("--direction must be v2r or r2v, got '" + direction + "'");
  }
  const GeneratorPair gens = generators_from_records(load_container(checkpoint));
  const GeneratorNet& g = direction == "v2r" ? gens.v2r : gens.r2v;
  const std::vector<fs::path> inputs = list_pngs(in);
  fs::create_directories(out);
  for (const fs::path& p : inputs) {
    save_image((fs::path(out) / p.filename()).string(), generator_forward(g, load_image(p.string())));
  }
  std::printf("adapted %zu images (%s) into %s\n", inputs.size(), direction.c_str(), out.c_str());
  return kOk;
}

int cmd_eval(const std::string& corpus_a, const std::string& corpus_b, const std::string& labels_dir,
             const std::string& report, int classes, float alpha, float beta) {
  const SoftnessParams p{alpha, beta};
  p.validate();
  const auto pa = corpus_images(corpus_a), pb = corpus_images(corpus_b), pl = corpus_labels(labels_dir);
  if (pa.size() != pb.size() || pa.size() != pl.size()) {
    throw std::invalid_argument("misaligned corpora: " + std::to_string(pa.size()) + " / " +
                                std::to_string(pb.size()) + " images and " + std::to_string(pl.size()) +
                                " label maps");
  }
  std::vector<Tensor> a, b;
  std::vector<LabelMap> l;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    a.push_back(load_image(pa[i].string()));
    b.push_back(load_image(pb[i].string()));
    l.push_back(load_labels(pl[i].string(), classes));
  }
  const std::string json = evaluate_pairs(a, b, l, classes, p).to_json();
  if (report.empty() || report == "-") {
    std::cout << json << '\n';
  } else {
    std::ofstream f(report);
    if (!f) throw std::runtime_error("cannot write report " + report);
    f << json << '\n';
  }
  return kOk;
}

int cmd_gradcheck(std::uint64_t seed, int cases, const std::string& corrupt_op) {
  const auto results = run_gradcheck_suite(seed, cases, corrupt_op);
  bool ok = true;
  std::printf("%-24s %6s %14s  %s\n", "op", "cases", "max_rel_error", "status");
  for (const GradcheckResult& r : results) {
    std::printf("%-24s %6d %14.6e  %s\n", r.op.c_str(), r.cases, r.max_rel_error, r.passed() ? "ok" : "FAIL");
    ok = ok && r.passed();
  }
  std::printf("tolerance %.0e: %s\n", kGradcheckTolerance, ok ? "all passed" : "FAILED");
  return ok ? kOk : kRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SG-GAN semantic-aware domain adaptation"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen", "Render a synthetic corpus");
  std::string gen_out, gen_domain, gen_size = "64x128";
  std::size_t gen_count = 0;
  std::uint64_t gen_seed = 0;
  int gen_classes = 4;
  gen->add_option("--out", gen_out, "Corpus root")->required();
  gen->add_option("--domain", gen_domain, "virtual or real")->required();
  gen->add_option("--count", gen_count, "Number of scenes")->required();
  gen->add_option("--size", gen_size, "HxW");
  gen->add_option("--seed", gen_seed, "Seed of scene 0");
  gen->add_option("--classes", gen_classes, "4 or 8");

  auto* train = app.add_subcommand("train", "Train both generators and discriminators");
  std::string tr_config, tr_virtual, tr_real, tr_out, tr_resume;
  std::vector<std::string> tr_set;
  train->add_option("--config", tr_config, "key = value configuration file");
  train->add_option("--set", tr_set, "Override one key (key=value); repeatable");
  train->add_option("--virtual-dir", tr_virtual, "Virtual corpus directory")->required();
  train->add_option("--real-dir", tr_real, "Real corpus directory")->required();
  train->add_option("--out", tr_out, "Output directory")->required();
  train->add_option("--resume", tr_resume, "Checkpoint to continue from");

  auto* adapt = app.add_subcommand("adapt", "Translate images with a trained generator");
  std::string ad_ckpt, ad_in, ad_out, ad_dir = "v2r";
  adapt->add_option("--checkpoint", ad_ckpt, "Generator or training checkpoint")->required();
  adapt->add_option("--in", ad_in, "Directory of PNG images")->required();
  adapt->add_option("--out", ad_out, "Output directory")->required();
  adapt->add_option("--direction", ad_dir, "v2r or r2v");

  auto* eval = app.add_subcommand("eval", "Compare two aligned corpora");
  std::string ev_a, ev_b, ev_labels, ev_report;
  int ev_classes = 4;
  float ev_alpha = 0.9f, ev_beta = 0.1f;
  eval->add_option("--corpus-a", ev_a, "First image set")->required();
  eval->add_option("--corpus-b", ev_b, "Second image set")->required();
  eval->add_option("--labels", ev_labels, "Label maps shared by both sets")->required();
  eval->add_option("--report", ev_report, "JSON report path (stdout when omitted)");
  eval->add_option("--classes", ev_classes, "Number of classes");
  eval->add_option("--alpha", ev_alpha, "Boundary weight of the gradient loss");
  eval->add_option("--beta", ev_beta, "Uniform weight of the gradient loss");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
  std::uint64_t gc_seed = 0;
  int gc_cases = 20;
  std::string gc_corrupt;
  gc->add_option("--seed", gc_seed, "Seed");
  gc->add_option("--cases", gc_cases, "Cases per op");
  gc->add_option("--corrupt-op", gc_corrupt, "Test fixture: give this op a wrong backward")->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kValidation;
  }

  try {
    if (*gen) return cmd_gen(gen_out, gen_domain, gen_count, gen_size, gen_seed, gen_classes);
    if (*train) return cmd_train(tr_config, tr_set, tr_virtual, tr_real, tr_out, tr_resume);
    if (*adapt) return cmd_adapt(ad_ckpt, ad_in, ad_out, ad_dir);
    if (*eval) return cmd_eval(ev_a, ev_b, ev_labels, ev_report, ev_classes, ev_alpha, ev_beta);
    if (*gc) return cmd_gradcheck(gc_seed, gc_cases, gc_corrupt);
  } catch (const std::invalid_argument& e) {  // includes ConfigError and ShapeError
    std::fprintf(stderr, "error: %s\n", e.what());
    return kValidation;
  } catch (const std::out_of_range& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntime;
  }
  return kValidation;
}

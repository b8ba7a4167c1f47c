#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lbp/checker.hpp"
#include "lbp/errors.hpp"
#include "lbp/manifest.hpp"
#include "lbp/pipeline.hpp"

namespace lbp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

inline std::filesystem::path ensure_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw Error("cannot create output directory '" + dir + "': " + ec.message());
  return p;
}

inline PipelineMode parse_mode(const std::string& s) {
  if (s == "text-to-text") return PipelineMode::kTextToText;
  if (s == "multimodal") return PipelineMode::kMultimodal;
  throw ConfigError("--mode must be text-to-text or multimodal, got '" + s + "'");
}

/// "internal" or "external:<address>".
inline void apply_generator_flag(GeneratorConfig& g, const std::string& flag) {
  if (flag == "internal") {
    g.external = false;
  } else if (flag.rfind("external:", 0) == 0) {
    g.external = true;
    g.address = flag.substr(9);
    if (g.address.empty()) throw ConfigError("--generator external: needs an address");
  } else {
    throw ConfigError("--generator must be internal or external:<address>, got '" + flag + "'");
  }
}

inline LearnedState learn(const PipelineConfig& cfg) {
  return cfg.mode == PipelineMode::kTextToText ? learn_text(cfg) : learn_multimodal(cfg);
}

struct RunFlags {
  std::string config;
  std::string manifest;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> trials;
  std::optional<std::string> mode;
  std::optional<std::string> generator;
  std::optional<std::string> decode;
  std::optional<std::size_t> jobs;
};

inline PipelineConfig config_for_run(const RunFlags& f) {
  if (f.config.empty() == f.manifest.empty()) {
    throw ConfigError("run needs exactly one of --config or --manifest");
  }
  PipelineConfig cfg;
  if (!f.manifest.empty()) {
    if (f.seed || f.trials || f.mode || f.generator || f.decode) {
      throw ConfigError("--manifest fixes the configuration; only --jobs may be given with it");
    }
    cfg = config_from_manifest(load_manifest(f.manifest));
  } else {
    cfg = load_config(f.config);
    if (f.seed) cfg.seed = *f.seed;
    if (f.trials) cfg.trials = *f.trials;
    if (f.mode) cfg.mode = parse_mode(*f.mode);
    if (f.generator) apply_generator_flag(cfg.generator, *f.generator);
    if (f.decode) cfg.generator.decode = parse_decode_mode(*f.decode);
  }
  if (f.jobs) cfg.jobs = *f.jobs;
  validate(cfg);
  return cfg;
}

inline std::string report_text(const Report& r) { return to_json(r).dump(2) + "\n"; }

}  // namespace detail

/// learn/babble/prune/run/check/report. Returns the process exit code.
inline int main(int argc, const char* const* argv, std::ostream& out = std::cout,
                std::ostream& err = std::cerr) {
  CLI::App app{"Learn-Babble-Prune: evidence-closed generation and model checking", "lbp"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  // run
  detail::RunFlags rf;
  auto* run = app.add_subcommand("run", "Run the full pipeline and write trial records, report and manifest");
  run->add_option("--config", rf.config, "Pipeline configuration (JSON)");
  run->add_option("--manifest", rf.manifest, "Repeat the run recorded in a manifest");
  run->add_option("--out", rf.out, "Output directory")->required();
  run->add_option("--seed", rf.seed, "Override the trial seed");
  run->add_option("--trials", rf.trials, "Override the trial count");
  run->add_option("--mode", rf.mode, "text-to-text | multimodal");
  run->add_option("--generator", rf.generator, "internal | external:<address>");
  run->add_option("--decode", rf.decode, "argmax | sample");
  run->add_option("--jobs", rf.jobs, "Worker threads for trial fan-out");

  // learn
  std::string learn_config, learn_out;
  auto* learn = app.add_subcommand("learn", "Build the evidence set and write a snapshot");
  learn->add_option("--config", learn_config, "Pipeline configuration (JSON)")->required();
  learn->add_option("--out", learn_out, "Output directory")->required();

  // babble
  std::string babble_config, babble_prompt, babble_generator, babble_decode = "sample";
  std::size_t babble_n = 1, babble_max_tokens = 0, babble_top_k = 0;
  std::uint64_t babble_seed = 0;
  auto* bab = app.add_subcommand("babble", "Emit candidate strings, one per line");
  bab->add_option("--config", babble_config, "Pipeline configuration (JSON)")->required();
  bab->add_option("--prompt", babble_prompt, "Prompt text");
  bab->add_option("-n,--num-candidates", babble_n, "Number of candidates");
  bab->add_option("--seed", babble_seed, "Sampling seed");
  bab->add_option("--decode", babble_decode, "argmax | sample");
  bab->add_option("--max-tokens", babble_max_tokens, "Token budget (default from config)");
  bab->add_option("--top-k", babble_top_k, "Restrict sampling to the k most likely tokens");
  bab->add_option("--generator", babble_generator, "internal | external:<address>");

  // prune
  std::string prune_evidence, prune_candidates, prune_out, prune_rejection = kDefaultRejection;
  auto* prune = app.add_subcommand("prune", "Check candidates against an evidence snapshot");
  prune->add_option("--evidence", prune_evidence, "Evidence snapshot (JSON lines)")->required();
  prune->add_option("--candidates", prune_candidates, "Candidates, one per line")->required();
  prune->add_option("--out", prune_out, "Output file (default stdout)");
  prune->add_option("--rejection", prune_rejection, "Output for rejected candidates");

  // check
  SuiteOptions suite;
  std::string check_out;
  auto* check = app.add_subcommand("check", "Run the model-checker suite");
  check->add_option("--check", suite.only, "Run only the named check (repeatable)");
  check->add_option("--seeds", suite.seeds, "Randomized instances per check");
  check->add_option("--world-seeds", suite.world_seeds, "Randomized worlds for closure_synonymy");
  check->add_option("--max-states", suite.max_states, "State bound (at most 12)");
  check->add_option("--max-strings", suite.max_strings, "String bound (at most 64)");
  check->add_option("--seed", suite.base_seed, "Base seed");
  check->add_option("--out", check_out, "Output directory for check_results.json");

  // report
  std::string report_trials, report_out;
  auto* rep = app.add_subcommand("report", "Recompute a report from trial records");
  rep->add_option("--trials", report_trials, "trials.jsonl")->required();
  rep->add_option("--out", report_out, "Output directory for report.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*run) {
      const PipelineConfig cfg = detail::config_for_run(rf);
      RunManifest manifest = make_manifest(cfg);
      const auto records = run_pipeline(cfg);
      const Report report = summarize(records);
      const auto dir = detail::ensure_dir(rf.out);
      std::ostringstream jsonl, csv;
      write_records_jsonl(records, jsonl);
      write_records_csv(records, csv);
      const std::string report_json = detail::report_text(report);
      detail::write_text(dir / "trials.jsonl", jsonl.str());
      detail::write_text(dir / "trials.csv", csv.str());
      detail::write_text(dir / "report.json", report_json);
      manifest.artifacts["trials.jsonl"] = sha256_hex(jsonl.str());
      manifest.artifacts["trials.csv"] = sha256_hex(csv.str());
      manifest.artifacts["report.json"] = sha256_hex(report_json);
      detail::write_text(dir / "manifest.json", to_json(manifest).dump(2) + "\n");
      out << "trials " << report.trials << ", accepted " << report.accepted << '\n';
      return kExitOk;
    }

    if (*learn) {
      PipelineConfig cfg = load_config(learn_config);
      validate(cfg);
      const auto st = detail::learn(cfg);
      const auto dir = detail::ensure_dir(learn_out);
      detail::write_text(dir / "evidence.jsonl", snapshot_string(st.evidence));
      if (!st.readings.empty()) {
        std::ostringstream r;
        save_readings(st.readings, r);
        detail::write_text(dir / "readings.jsonl", r.str());
      }
      out << "evidence set: " << st.evidence.size() << " strings ("
          << st.evidence.direct_members().size() << " direct)\n";
      return kExitOk;
    }

    if (*bab) {
      PipelineConfig cfg = load_config(babble_config);
      if (!babble_generator.empty()) detail::apply_generator_flag(cfg.generator, babble_generator);
      validate(cfg);
      GenerationRequest req;
      req.prompt = SentenceString(babble_prompt);
      req.num_candidates = babble_n;
      req.max_tokens = babble_max_tokens ? babble_max_tokens : cfg.generator.max_tokens;
      req.mode = parse_decode_mode(babble_decode);
      req.top_k = babble_top_k;
      req.seed = babble_seed;
      req.validate();
      std::vector<SentenceString> cands;
      if (cfg.generator.external) {
        auto g = ExternalGenerator::open(cfg.generator.address,
                                         generator_deadline_from_env(cfg.generator.deadline));
        cands = g->generate(req);
      } else {
        const auto st = detail::learn(cfg);
        cands = babble(*st.model, req);
      }
      for (const auto& c : cands) out << c.text() << '\n';
      return kExitOk;
    }

    if (*prune) {
      const EvidenceSet e = load_snapshot(prune_evidence);
      std::ifstream in(prune_candidates);
      if (!in) throw Error("cannot open candidates '" + prune_candidates + "'");
      std::ostringstream buf;
      std::string line;
      while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const SentenceString cand(line);
        const bool ok = contains(e, cand);
        nlohmann::json j{{"candidate", cand.raw()},
                         {"accepted", ok},
                         {"output", ok ? cand.raw() : prune_rejection},
                         {"matched", ok ? nlohmann::json(cand.text()) : nlohmann::json(nullptr)}};
        buf << j.dump() << '\n';
      }
      if (prune_out.empty()) {
        out << buf.str();
      } else {
        detail::write_text(prune_out, buf.str());
      }
      return kExitOk;
    }

    if (*check) {
      const auto results = run_check_suite(suite);
      nlohmann::json j = nlohmann::json::array();
      bool all = true;
      for (const auto& r : results) {
        j.push_back(to_json(r));
        all = all && r.status == "pass";
        out << r.status << ' ' << r.name << " (" << r.instances << " instances)";
        if (!r.detail.empty()) out << ": " << r.detail;
        out << '\n';
      }
      if (!check_out.empty()) {
        const auto dir = detail::ensure_dir(check_out);
        detail::write_text(dir / "check_results.json", j.dump(2) + "\n");
      }
      return all ? kExitOk : kExitFailure;
    }

    if (*rep) {
      std::ifstream in(report_trials);
      if (!in) throw Error("cannot open trial records '" + report_trials + "'");
      const auto text = detail::report_text(summarize(read_records_jsonl(in)));
      if (report_out.empty()) {
        out << text;
      } else {
        detail::write_text(detail::ensure_dir(report_out) / "report.json", text);
      }
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "lbp: usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const StageError& e) {
    err << "lbp: [" << e.stage() << "] " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "lbp: error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace lbp::cli

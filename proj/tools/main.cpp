// dimba: single entry point for data generation, staged training, sampling,
// benchmarking, evaluation and corpus statistics.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage/config error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dimba/bench.hpp"
#include "dimba/datagen.hpp"
#include "dimba/evalsuite.hpp"
#include "dimba/trainer.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// key = value lines, '#' comments. Duplicate keys are an error naming both
// occurrences; unknown keys are an error too (checked against the app).
std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::map<std::string, std::string> kv;
    std::map<std::string, int> first_line;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto strip = [](std::string s) {
            auto b = s.find_first_not_of(" \t\r");
            auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        line = strip(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
        std::string key = strip(line.substr(0, eq));
        std::string val = strip(line.substr(eq + 1));
        if (kv.count(key))
            throw ConfigError("duplicate config key '" + key + "' at " + path + ":" +
                              std::to_string(lineno) + " (first set at " + path + ":" +
                              std::to_string(first_line[key]) + ")");
        kv[key] = val;
        first_line[key] = lineno;
    }
    return kv;
}

// Applies file values to options the command line did not set; CLI flags win.
// Keys use the long option name without dashes (e.g. "steps", "out-dir").
void apply_config(CLI::App& app, const std::map<std::string, std::string>& kv,
                  const std::string& path) {
    for (const auto& [key, val] : kv) {
        CLI::Option* opt = nullptr;
        for (auto* o : app.get_options())
            if (o->get_name(false, true).find("--" + key) != std::string::npos) opt = o;
        for (auto* sub : app.get_subcommands())
            for (auto* o : sub->get_options())
                if (o->get_name(false, true).find("--" + key) != std::string::npos) opt = o;
        if (!opt) throw ConfigError(path + ": unknown config key '" + key + "'");
        if (opt->count() > 0) continue;  // command line overrides the file
        opt->add_result(val);
        opt->run_callback();
    }
}

std::string default_out_root() {
    if (const char* env = std::getenv("DIMBA_OUT")) return env;
    return "out";
}

// Every run drops a resolved_config.txt so the artifact directory alone
// reproduces it.
void echo_resolved_config(const CLI::App& app, const CLI::App* sub, const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::ofstream f(out_dir + "/resolved_config.txt");
    f << "subcommand = " << (sub ? sub->get_name() : "") << "\n";
    auto dump = [&](const CLI::App& a) {
        for (const auto* o : a.get_options()) {
            std::string name = o->get_name(false, true);
            auto dd = name.find("--");
            if (dd == std::string::npos) continue;
            name = name.substr(dd + 2);
            auto comma = name.find(',');
            if (comma != std::string::npos) name = name.substr(0, comma);
            if (name == "help" || name == "config") continue;
            std::string val = o->count() ? o->results().back() : o->get_default_str();
            f << name << " = " << val << "\n";
        }
    };
    dump(app);
    if (sub) dump(*sub);
}

dimba::Tensor to_unit_range(const dimba::Tensor& x) {
    dimba::Tensor y = x;
    for (std::size_t i = 0; i < y.numel(); ++i)
        y[i] = std::clamp(0.5 * (y[i] + 1.0), 0.0, 1.0);
    return y;
}

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
    if (out.empty()) throw ConfigError("empty integer list: '" + s + "'");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dimba: hybrid-backbone diffusion toolkit"};
    app.require_subcommand(0, 1);

    std::string config_path, out_dir = default_out_root() ;
    std::uint64_t seed = 0;
    int threads = 1;
    app.add_option("--config", config_path, "key = value config file; CLI flags override it");
    app.add_option("--seed", seed, "global rng seed")->capture_default_str();
    app.add_option("--threads", threads, "worker thread bound")->capture_default_str();
    app.add_option("--out-dir", out_dir,
                   "output directory (default from DIMBA_OUT or ./out)")
        ->capture_default_str();

    // -- datagen ------------------------------------------------------------
    auto* cmd_datagen = app.add_subcommand("datagen", "generate a synthetic corpus + manifest");
    int dg_n = 512, dg_side = 16;
    double dg_mix = 0.9;
    double dg_threshold = -1;  // <0 = no filtering
    bool dg_no_images = false;
    cmd_datagen->add_option("--n", dg_n, "number of scenes")->capture_default_str();
    cmd_datagen->add_option("--side", dg_side, "image side in pixels")->capture_default_str();
    cmd_datagen->add_option("--mix", dg_mix, "long-caption fraction")->capture_default_str();
    cmd_datagen->add_option("--threshold", dg_threshold,
                            "drop scenes with aesthetic score below this (off when negative)")
        ->capture_default_str();
    cmd_datagen->add_flag("--no-images", dg_no_images, "skip PPM emission");

    // -- train --------------------------------------------------------------
    auto* cmd_train = app.add_subcommand("train", "staged training");
    std::string tr_stage = "pretrain", tr_manifest, tr_init;
    long long tr_steps = 200, tr_interval = 100;
    int tr_batch = 8, tr_patience = 2, tr_new_side = 32;
    double tr_lr = 1e-3;
    bool tr_no_pe_interp = false;
    int m_blocks = 2, m_hidden = 64, m_ratio_k = 1, m_heads = 4, m_res = 16, m_patch = 2;
    cmd_train->add_option("--stage", tr_stage, "pretrain | quality | resadapt")
        ->check(CLI::IsMember({"pretrain", "quality", "resadapt"}))
        ->capture_default_str();
    cmd_train->add_option("--manifest", tr_manifest, "corpus manifest path")->required();
    cmd_train->add_option("--init", tr_init, "starting checkpoint (quality / resadapt)");
    cmd_train->add_option("--steps", tr_steps, "training steps")->capture_default_str();
    cmd_train->add_option("--interval", tr_interval, "checkpoint/eval interval")
        ->capture_default_str();
    cmd_train->add_option("--batch", tr_batch, "batch size")->capture_default_str();
    cmd_train->add_option("--lr", tr_lr, "learning rate")->capture_default_str();
    cmd_train->add_option("--patience", tr_patience, "quality-tune early-stop patience")
        ->capture_default_str();
    cmd_train->add_option("--new-side", tr_new_side, "resadapt target resolution")
        ->capture_default_str();
    cmd_train->add_flag("--no-pe-interp", tr_no_pe_interp,
                        "resadapt: reinitialize the positional embedding instead");
    cmd_train->add_option("--blocks", m_blocks, "model blocks")->capture_default_str();
    cmd_train->add_option("--hidden", m_hidden, "model width")->capture_default_str();
    cmd_train->add_option("--ratio-k", m_ratio_k, "Mamba sublayers per attention")
        ->capture_default_str();
    cmd_train->add_option("--heads", m_heads, "attention heads")->capture_default_str();
    cmd_train->add_option("--res", m_res, "base resolution")->capture_default_str();
    cmd_train->add_option("--patch", m_patch, "patch size")->capture_default_str();

    // -- sample -------------------------------------------------------------
    auto* cmd_sample = app.add_subcommand("sample", "sample an image from a checkpoint");
    std::string sm_ckpt, sm_prompt = "a red circle";
    int sm_steps = 20;
    double sm_guidance = 4.5;
    cmd_sample->add_option("--ckpt", sm_ckpt, "checkpoint path");
    cmd_sample->add_option("--prompt", sm_prompt, "text prompt")->capture_default_str();
    cmd_sample->add_option("--steps", sm_steps, "solver steps")->capture_default_str();
    cmd_sample->add_option("--guidance", sm_guidance, "guidance weight")->capture_default_str();

    // -- bench --------------------------------------------------------------
    auto* cmd_bench = app.add_subcommand("bench", "throughput / FLOP / scan benchmarks");
    std::string bn_grid = "64,256,1024", bn_ratios = "1,2,4", bn_kind = "ratios";
    int bn_total_mixers = 12, bn_hidden = 64, bn_reps = 3, bn_chunk = 16;
    cmd_bench->add_option("--kind", bn_kind, "ratios | scan")
        ->check(CLI::IsMember({"ratios", "scan"}))
        ->capture_default_str();
    cmd_bench->add_option("--grid", bn_grid, "comma-separated sequence lengths")
        ->capture_default_str();
    cmd_bench->add_option("--ratios", bn_ratios, "comma-separated K values")
        ->capture_default_str();
    cmd_bench->add_option("--total-mixers", bn_total_mixers, "fixed mixer-sublayer budget")
        ->capture_default_str();
    cmd_bench->add_option("--hidden", bn_hidden, "model width")->capture_default_str();
    cmd_bench->add_option("--reps", bn_reps, "timing repetitions")->capture_default_str();
    cmd_bench->add_option("--chunk", bn_chunk, "scan kernel chunk length")->capture_default_str();

    // -- eval ---------------------------------------------------------------
    auto* cmd_eval = app.add_subcommand("eval", "compositional or distributional evaluation");
    std::string ev_suite = "compbench", ev_ckpt, ev_manifest;
    int ev_n = 20, ev_steps = 20;
    double ev_guidance = 4.5;
    cmd_eval->add_option("--suite", ev_suite, "compbench | frechet")
        ->check(CLI::IsMember({"compbench", "frechet"}))
        ->capture_default_str();
    cmd_eval->add_option("--ckpt", ev_ckpt, "checkpoint path")->required();
    cmd_eval->add_option("--manifest", ev_manifest, "reference corpus manifest (frechet)");
    cmd_eval->add_option("--n", ev_n, "prompts per category / sample count")
        ->capture_default_str();
    cmd_eval->add_option("--steps", ev_steps, "solver steps")->capture_default_str();
    cmd_eval->add_option("--guidance", ev_guidance, "guidance weight")->capture_default_str();

    // -- stats --------------------------------------------------------------
    auto* cmd_stats = app.add_subcommand("stats", "corpus caption statistics");
    std::string st_manifest;
    cmd_stats->add_option("--manifest", st_manifest, "corpus manifest path")->required();

    for (auto* s : {cmd_datagen, cmd_train, cmd_sample, cmd_bench, cmd_eval, cmd_stats})
        s->fallthrough();  // global flags may follow the subcommand

    // Two-pass parse: flags first, then fill unset options from the file.
    try {
        try {
            app.parse(argc, argv);
        } catch (const CLI::ParseError& e) {
            int rc = app.exit(e);
            return rc == 0 ? 0 : 2;
        }
        if (!config_path.empty()) apply_config(app, parse_config_file(config_path), config_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }

#ifdef _OPENMP
    omp_set_num_threads(std::max(1, threads));
#endif

    const CLI::App* active = app.get_subcommands().empty() ? nullptr : app.get_subcommands()[0];
    if (!active) {
        std::cerr << app.help();
        return 2;
    }

    try {
        echo_resolved_config(app, active, out_dir);

        if (active == cmd_datagen) {
            std::optional<double> thr;
            if (dg_threshold >= 0) thr = dg_threshold;
            dimba::Corpus corpus = dimba::build_corpus(dg_n, dg_mix, thr, out_dir + "/images",
                                                       dg_side, seed, !dg_no_images);
            dimba::save_manifest(corpus, out_dir + "/manifest.jsonl");
            auto stats = dimba::corpus_stats(corpus.records);
            std::cout << "wrote " << corpus.records.size() << " records to " << out_dir
                      << "/manifest.jsonl (long fraction " << stats.long_fraction << ")\n";
            return 0;
        }

        if (active == cmd_train) {
            dimba::Corpus corpus = dimba::load_manifest(tr_manifest);
            if (corpus.records.empty()) throw std::runtime_error("empty corpus: " + tr_manifest);
            dimba::ModelConfig mc;
            mc.n_blocks = m_blocks;
            mc.hidden = m_hidden;
            mc.ratio_k = m_ratio_k;
            mc.n_heads = m_heads;
            mc.base_resolution = m_res;
            mc.patch = m_patch;
            mc.d_text = mc.hidden / 2;
            mc.validate();
            dimba::TrainConfig tc;
            tc.lr = tr_lr;
            tc.batch = tr_batch;
            tc.max_steps = tr_steps;
            tc.ckpt_interval = tr_interval;
            tc.patience = tr_patience;
            tc.seed = seed;
            tc.out_dir = out_dir;
            dimba::TextEncoder enc =
                dimba::TextEncoder::init(mc.d_text, mc.max_text_tokens, 1234);

            dimba::Checkpoint result;
            if (tr_stage == "pretrain") {
                result = dimba::pretrain(mc, corpus, enc, tc);
            } else {
                if (tr_init.empty()) {
                    std::cerr << "error: --stage " << tr_stage
                              << " needs --init <checkpoint>; run --stage pretrain first\n";
                    return 2;
                }
                dimba::Checkpoint start = dimba::load_checkpoint(tr_init);
                if (tr_stage == "quality") {
                    auto prompts = dimba::make_prompt_set(4, seed + 1);
                    dimba::NoiseSchedule sched = dimba::make_schedule(1000);
                    auto eval_fn = [&](const dimba::Model& m) {
                        auto rep = dimba::compbench_report(m, prompts, {ev_steps, ev_guidance, seed},
                                                           enc, sched);
                        return dimba::composite_score(rep);
                    };
                    result = dimba::quality_tune(start, corpus, enc, tc, eval_fn);
                } else {
                    result = dimba::adapt_resolution(start, tr_new_side, corpus, enc, tc,
                                                     !tr_no_pe_interp);
                }
            }
            std::string path = out_dir + "/final.dmba";
            dimba::save_checkpoint(result, path);
            std::cout << "stage " << tr_stage << " done at step " << result.meta.step
                      << "; wrote " << path << "\n";
            return 0;
        }

        if (active == cmd_sample) {
            if (sm_ckpt.empty()) {
                std::cerr << "error: sample needs --ckpt <path>; train one with "
                             "`dimba train --stage pretrain` or pass an existing checkpoint\n";
                return 2;
            }
            dimba::Checkpoint ckpt = dimba::load_checkpoint(sm_ckpt);
            dimba::Model m = dimba::model_from_checkpoint(ckpt);
            dimba::TextEncoder enc =
                dimba::TextEncoder::init(m.cfg.d_text, m.cfg.max_text_tokens, 1234);
            dimba::NoiseSchedule sched = dimba::make_schedule(1000);
            dimba::Rng rng(seed);
            dimba::Tensor img = dimba::sample_image(m, enc.condition(sm_prompt), sched, sm_steps,
                                                    sm_guidance, rng);
            fs::create_directories(out_dir);
            std::string img_path = out_dir + "/sample.ppm";
            dimba::write_ppm(img_path, to_unit_range(img));
            json meta = {{"prompt", sm_prompt},   {"seed", seed},
                         {"steps", sm_steps},     {"guidance", sm_guidance},
                         {"checkpoint", sm_ckpt}, {"image", img_path}};
            std::ofstream(out_dir + "/sample.json") << meta.dump(2) << "\n";
            std::cout << "wrote " << img_path << " and sample.json\n";
            return 0;
        }

        if (active == cmd_bench) {
            fs::create_directories(out_dir);
            auto grid = parse_int_list(bn_grid);
            if (bn_kind == "scan") {
                auto rows = dimba::bench_scan_kernels(grid, 64, 16, bn_chunk, bn_reps);
                std::ofstream f(out_dir + "/scan_bench.csv");
                f << "L,sequential_ms,chunked_ms,max_rel_err,threads\n";
                for (const auto& r : rows)
                    f << r.L << "," << r.sequential_ms << "," << r.chunked_ms << ","
                      << r.max_rel_err << "," << threads << "\n";
                std::cout << "wrote " << out_dir << "/scan_bench.csv\n";
            } else {
                auto rep = dimba::compare_ratios(parse_int_list(bn_ratios), grid, bn_total_mixers,
                                                 bn_hidden, bn_reps, out_dir + "/ratio_bench.csv");
                std::cout << "wrote " << out_dir << "/ratio_bench.csv (FLOP crossover L ~ "
                          << rep.crossover << ")\n";
            }
            return 0;
        }

        if (active == cmd_eval) {
            dimba::Checkpoint ckpt = dimba::load_checkpoint(ev_ckpt);
            dimba::Model m = dimba::model_from_checkpoint(ckpt);
            dimba::TextEncoder enc =
                dimba::TextEncoder::init(m.cfg.d_text, m.cfg.max_text_tokens, 1234);
            dimba::NoiseSchedule sched = dimba::make_schedule(1000);
            fs::create_directories(out_dir);
            if (ev_suite == "compbench") {
                auto prompts = dimba::make_prompt_set(ev_n, seed + 1);
                auto rep = dimba::compbench_report(m, prompts, {ev_steps, ev_guidance, seed}, enc,
                                                   sched);
                std::cout << dimba::report_table(rep);
                dimba::report_csv(rep, out_dir + "/compbench.csv");
                std::cout << "wrote " << out_dir << "/compbench.csv\n";
            } else {
                if (ev_manifest.empty()) {
                    std::cerr << "error: --suite frechet needs --manifest for the reference set\n";
                    return 2;
                }
                dimba::Corpus ref = dimba::load_manifest(ev_manifest);
                std::vector<dimba::Tensor> ref_imgs, gen_imgs;
                int n = std::min<int>(ev_n, static_cast<int>(ref.records.size()));
                if (n < dimba::kFeatureDim + 1)
                    throw std::runtime_error("frechet needs at least " +
                                             std::to_string(dimba::kFeatureDim + 1) + " samples");
                for (int i = 0; i < n; ++i) {
                    const auto& rec = ref.records[i];
                    ref_imgs.push_back(dimba::render(rec.scene, m.cfg.base_resolution));
                    dimba::Rng rng = dimba::Rng::derive(seed, i);
                    gen_imgs.push_back(to_unit_range(dimba::sample_image(
                        m, enc.condition(rec.caption), sched, ev_steps, ev_guidance, rng)));
                }
                double d = dimba::frechet_stats_distance(gen_imgs, ref_imgs, true);
                std::cout << "frechet distance (" << n << " samples/side): " << d << "\n";
                std::ofstream(out_dir + "/frechet.csv") << "n,distance\n" << n << "," << d << "\n";
            }
            return 0;
        }

        if (active == cmd_stats) {
            dimba::Corpus corpus = dimba::load_manifest(st_manifest);
            auto s = dimba::corpus_stats(corpus.records);
            std::cout << "records:             " << corpus.records.size() << "\n"
                      << "avg caption words:   " << s.avg_caption_words << "\n"
                      << "avg nouns/caption:   " << s.avg_nouns_per_caption << "\n"
                      << "distinct nouns:      " << s.total_distinct_nouns << "\n"
                      << "valid nouns (>10):   " << s.valid_distinct_nouns << "\n"
                      << "valid ratio:         " << s.valid_ratio << "\n"
                      << "long-style fraction: " << s.long_fraction << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

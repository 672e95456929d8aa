#include "alt/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "alt/checkpoint.hpp"
#include "alt/flops.hpp"
#include "alt/train.hpp"

namespace alt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void guard_path(const fs::path& p, bool force) {
    if (!fs::exists(p)) return;
    if (force) return;
    if (fs::is_directory(p) && fs::is_empty(p)) return;
    throw ValidationError("output path exists: " + p.string() + " (use --force to overwrite)");
}

void ensure_dir(const fs::path& p) { fs::create_directories(p); }

uint64_t env_seed() {
    if (const char* s = std::getenv("ALT_SEED")) {
        try {
            return std::stoull(s);
        } catch (...) {
            throw ValidationError("ALT_SEED is not an unsigned integer");
        }
    }
    return 0;
}

json load_json_file(const std::string& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw IoError(std::string("cannot open ") + what + ": " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string(what) + ": " + e.what());
    }
}

void write_json_file(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump(2) << "\n";
}

// a config file may be either a bare TrainConfig object or a run echo
// wrapping one under "config"
TrainConfig config_from_file(const std::string& path) {
    json j = load_json_file(path, "config");
    if (j.contains("config")) j = j.at("config");
    return TrainConfig::from_json(j);
}

std::vector<std::string> split_csv(const std::string& csv) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : csv) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

Corpus corpus_for(const std::string& corpus_path, const Dataset& dataset,
                  const std::string& data_dir) {
    if (!corpus_path.empty()) return load_corpus(corpus_path);
    std::vector<std::string> labels;
    for (const auto& a : dataset.manifest().actions) labels.push_back(a.name);
    return build_corpus(labels, (fs::path(data_dir) / "lexicon.json").string());
}

json run_echo(const TrainConfig& cfg, const std::string& data_dir, const Corpus& corpus,
              uint64_t text_seed, const std::vector<std::string>& train_labels, long steps,
              uint64_t noise_uses, uint64_t shuffle_uses) {
    std::vector<std::string> units;
    for (const auto& e : corpus.entities) units.push_back(e.unit);
    return json{{"config", cfg.to_json()},
                {"run",
                 {{"data_dir", data_dir},
                  {"text_seed", text_seed},
                  {"train_labels", train_labels},
                  {"entity_units", units},
                  {"steps", steps},
                  {"rng", {{"seed", cfg.seed}, {"noise_uses", noise_uses},
                           {"shuffle_uses", shuffle_uses}}}}}};
}

struct TrainArgs {
    std::string data_dir, corpus_path, config_path, out_dir;
    uint64_t seed = 0;
    bool seed_set = false;
    int few_shot = -1;
    int epochs = -1;
    std::string precision, noise;
    bool force = false;
};

TrainConfig resolve_train_config(const TrainArgs& a) {
    TrainConfig cfg;
    if (!a.config_path.empty()) cfg = config_from_file(a.config_path);
    if (a.seed_set)
        cfg.seed = a.seed;
    else if (a.config_path.empty())
        cfg.seed = env_seed();
    if (a.few_shot >= 0) cfg.few_shot = a.few_shot;
    if (a.epochs >= 0) cfg.epochs = a.epochs;
    if (!a.precision.empty()) cfg.precision = parse_precision(a.precision);
    if (!a.noise.empty()) cfg.noise_mode = parse_noise_mode(a.noise);
    cfg.validate();
    return cfg;
}

template <class Real>
int do_train(const TrainArgs& args, const TrainConfig& cfg) {
    Dataset dataset = Dataset::load(args.data_dir);
    Corpus corpus = corpus_for(args.corpus_path, dataset, args.data_dir);

    auto outcome = train<Real>(cfg, dataset, corpus);
    ensure_dir(args.out_dir);
    const json echo = run_echo(cfg, args.data_dir, corpus, outcome.text_seed,
                               outcome.train_labels, outcome.steps, outcome.noise_uses,
                               outcome.shuffle_uses);
    write_json_file(echo, (fs::path(args.out_dir) / "config.json").string());
    save_checkpoint((fs::path(args.out_dir) / "model.altw").string(), outcome.model, echo);
    save_train_log(outcome.log, (fs::path(args.out_dir) / "train_log.jsonl").string());

    Metrics metrics = evaluate(outcome.model, outcome.class_embeddings, dataset, "test",
                               cfg.temperature, cfg.seed, cfg.config_hash());
    save_metrics(metrics, (fs::path(args.out_dir) / "metrics.json").string());
    std::cout << "trained " << cfg.epochs << " epochs; test top1 " << metrics.top1 << ", top5 "
              << metrics.top5 << "\n";
    return 0;
}

struct LoadedModel {
    TrainConfig cfg;
    json echo;
    AltModel<float> model;
    uint64_t text_seed = 0;
    std::vector<std::string> train_labels;
    std::vector<std::string> entity_units;
};

LoadedModel load_model(const std::string& ckpt_path) {
    LoadedModel lm;
    lm.echo = read_checkpoint_echo(ckpt_path);
    if (!lm.echo.contains("config"))
        throw IntegrityError("checkpoint echo lacks a config section");
    lm.cfg = TrainConfig::from_json(lm.echo.at("config"));
    lm.model = AltModel<float>::init(lm.cfg.model, lm.cfg.seed);
    load_checkpoint(ckpt_path, lm.model);
    const auto& run = lm.echo.at("run");
    lm.text_seed = run.at("text_seed").get<uint64_t>();
    lm.train_labels = run.at("train_labels").get<std::vector<std::string>>();
    lm.entity_units = run.at("entity_units").get<std::vector<std::string>>();
    return lm;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"align-before-adapt video recognition toolkit"};
    app.require_subcommand(1);

    // data gen
    auto* data = app.add_subcommand("data", "dataset commands");
    data->require_subcommand(1);
    auto* gen = data->add_subcommand("gen", "generate the synthetic benchmark");
    DatasetSpec gen_spec;
    std::string gen_out;
    bool gen_force = false;
    uint64_t gen_seed = 0;
    bool gen_seed_set = false;
    gen->add_option("--entities", gen_spec.n_entities, "entity vocabulary size");
    gen->add_option("--actions", gen_spec.n_actions, "seen action count");
    gen->add_option("--unseen", gen_spec.n_unseen, "unseen composition count");
    gen->add_option("--samples", gen_spec.samples_per_action, "samples per action");
    gen->add_option("--frames", gen_spec.frames, "frames per clip");
    gen->add_option("--size", gen_spec.image, "square frame side");
    gen->add_option("--patch", gen_spec.patch, "mask cell side");
    gen->add_option("--seed", gen_seed, "generator seed")->each([&](const std::string&) {
        gen_seed_set = true;
    });
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_flag("--force", gen_force, "overwrite existing output");

    // corpus build / embed
    auto* corpus_cmd = app.add_subcommand("corpus", "text corpus commands");
    corpus_cmd->require_subcommand(1);
    auto* cbuild = corpus_cmd->add_subcommand("build", "build a corpus from action labels");
    std::string cb_manifest, cb_labels, cb_lexicon, cb_out;
    bool cb_force = false;
    cbuild->add_option("--manifest", cb_manifest, "dataset manifest supplying the labels");
    cbuild->add_option("--labels", cb_labels, "comma-separated labels");
    cbuild->add_option("--lexicon", cb_lexicon, "lexicon JSON path");
    cbuild->add_option("--out", cb_out, "output corpus.jsonl")->required();
    cbuild->add_flag("--force", cb_force, "overwrite existing output");

    auto* cembed = corpus_cmd->add_subcommand("embed", "embed a corpus to an ALTE cache");
    std::string ce_corpus, ce_out;
    int ce_dim = 32;
    uint64_t ce_seed = 0;
    bool ce_seed_set = false, ce_force = false;
    cembed->add_option("--corpus", ce_corpus, "corpus.jsonl path")->required();
    cembed->add_option("--dim", ce_dim, "embedding dim");
    cembed->add_option("--seed", ce_seed, "text encoder seed")->each([&](const std::string&) {
        ce_seed_set = true;
    });
    cembed->add_option("--out", ce_out, "output .alte path")->required();
    cembed->add_flag("--force", ce_force, "overwrite existing output");

    // train
    auto* tr = app.add_subcommand("train", "train on a generated dataset");
    TrainArgs targs;
    tr->add_option("--data", targs.data_dir, "dataset directory")->required();
    tr->add_option("--corpus", targs.corpus_path, "corpus.jsonl (default: build from lexicon)");
    tr->add_option("--config", targs.config_path, "train config JSON");
    tr->add_option("--out", targs.out_dir, "output directory")->required();
    tr->add_option("--seed", targs.seed, "master seed")->each([&](const std::string&) {
        targs.seed_set = true;
    });
    tr->add_option("--few-shot", targs.few_shot, "train on K samples per class");
    tr->add_option("--epochs", targs.epochs, "override epoch count");
    tr->add_option("--precision", targs.precision, "f32|f64");
    tr->add_option("--noise", targs.noise, "gumbel|off");
    tr->add_flag("--force", targs.force, "overwrite existing output");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string ev_ckpt, ev_data, ev_split = "test", ev_out;
    bool ev_zero_shot = false, ev_force = false;
    ev->add_option("--ckpt", ev_ckpt, "checkpoint path")->required();
    ev->add_option("--data", ev_data, "dataset directory")->required();
    ev->add_option("--split", ev_split, "train|test|unseen");
    ev->add_flag("--zero-shot", ev_zero_shot, "score the unseen split with fresh class embeddings");
    ev->add_option("--out", ev_out, "metrics JSON path")->required();
    ev->add_flag("--force", ev_force, "overwrite existing output");

    // align
    auto* al = app.add_subcommand("align", "dump per-frame entity-to-region alignments");
    std::string al_ckpt, al_data, al_split = "test", al_out;
    bool al_sim = false, al_precision = false, al_force = false;
    int al_limit = 0;
    al->add_option("--ckpt", al_ckpt, "checkpoint path")->required();
    al->add_option("--data", al_data, "dataset directory")->required();
    al->add_option("--split", al_split, "train|test|unseen");
    al->add_option("--limit", al_limit, "max samples (0 = all)");
    al->add_flag("--sim", al_sim, "include full similarity rows");
    al->add_flag("--precision", al_precision, "also score against ground-truth masks");
    al->add_option("--out", al_out, "dump JSONL path")->required();
    al->add_flag("--force", al_force, "overwrite existing output");

    // bench flops / time
    auto* bench = app.add_subcommand("bench", "benchmarks");
    bench->require_subcommand(1);
    auto* bf = bench->add_subcommand("flops", "analytic multiply-add counts");
    ModelGeometry bf_geom;
    std::string bf_sweep, bf_out, bf_acc;
    bool bf_force = false;
    bf->add_option("--n", bf_geom.n, "patches per frame");
    bf->add_option("--d", bf_geom.d, "embed dim");
    bf->add_option("--depth", bf_geom.depth, "encoder depth");
    bf->add_option("--heads", bf_geom.heads, "attention heads");
    bf->add_option("--r", bf_geom.r, "tokens merged per block");
    bf->add_option("--frames", bf_geom.frames, "frames per clip");
    bf->add_option("--blocks", bf_geom.adapter_blocks, "adapter blocks");
    bf->add_option("--entities", bf_geom.entities, "corpus size K");
    bf->add_option("--mlp-ratio", bf_geom.mlp_ratio, "encoder MLP ratio");
    bf->add_option("--sweep", bf_sweep, "comma-separated r values");
    bf->add_option("--accuracy", bf_acc, "JSON file mapping r -> top1 to join");
    bf->add_option("--out", bf_out, "report JSON path");
    bf->add_flag("--force", bf_force, "overwrite existing output");

    auto* bt = bench->add_subcommand("time", "wall-clock seconds per clip");
    std::string bt_ckpt, bt_data, bt_out;
    int bt_reps = 5, bt_clips = 8;
    bool bt_force = false;
    bt->add_option("--ckpt", bt_ckpt, "checkpoint path")->required();
    bt->add_option("--data", bt_data, "dataset directory")->required();
    bt->add_option("--reps", bt_reps, "timed repetitions (warmup discarded)");
    bt->add_option("--clips", bt_clips, "clips per repetition");
    bt->add_option("--out", bt_out, "timing JSON path");
    bt->add_flag("--force", bt_force, "overwrite existing output");

    // ablate
    auto* ab = app.add_subcommand("ablate", "train and compare config variants");
    std::string ab_data, ab_corpus, ab_config, ab_out;
    std::string ab_variants = "full,learnable_query,action_name_corpus,r0";
    int ab_seeds = 5, ab_threads = 0;
    bool ab_force = false;
    ab->add_option("--data", ab_data, "dataset directory")->required();
    ab->add_option("--corpus", ab_corpus, "corpus.jsonl (default: build from lexicon)");
    ab->add_option("--config", ab_config, "base train config JSON");
    ab->add_option("--variants", ab_variants, "comma-separated variant names");
    ab->add_option("--seeds", ab_seeds, "seeds per variant");
    ab->add_option("--threads", ab_threads, "max concurrent runs (0 = hardware)");
    ab->add_option("--out", ab_out, "output directory")->required();
    ab->add_flag("--force", ab_force, "overwrite existing output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "alt: error: usage: " << e.what() << "\n";
        return 1;
    }

    try {
        if (gen->parsed()) {
            gen_spec.seed = gen_seed_set ? gen_seed : env_seed();
            guard_path(gen_out, gen_force);
            ensure_dir(gen_out);
            auto manifest = gen_dataset(gen_spec, gen_out);
            json echo = {{"command", "data gen"},
                         {"spec",
                          {{"n_entities", gen_spec.n_entities},
                           {"n_actions", gen_spec.n_actions},
                           {"n_unseen", gen_spec.n_unseen},
                           {"samples_per_action", gen_spec.samples_per_action},
                           {"frames", gen_spec.frames},
                           {"image", gen_spec.image},
                           {"patch", gen_spec.patch},
                           {"seed", gen_spec.seed}}}};
            write_json_file(echo, (fs::path(gen_out) / "config.json").string());
            std::cout << "generated " << manifest.samples.size() << " samples, "
                      << manifest.actions.size() << " actions in " << gen_out << "\n";
            return 0;
        }
        if (cbuild->parsed()) {
            guard_path(cb_out, cb_force);
            std::vector<std::string> labels;
            std::string lexicon = cb_lexicon;
            if (!cb_manifest.empty()) {
                Dataset ds = Dataset::load(fs::path(cb_manifest).parent_path().string());
                for (const auto& a : ds.manifest().actions) labels.push_back(a.name);
                if (lexicon.empty())
                    lexicon =
                        (fs::path(cb_manifest).parent_path() / "lexicon.json").string();
            }
            for (const auto& l : split_csv(cb_labels)) labels.push_back(l);
            if (labels.empty()) throw ValidationError("corpus build: no labels given");
            if (lexicon.empty()) throw ValidationError("corpus build: no lexicon given");
            auto corpus = build_corpus(labels, lexicon);
            save_corpus(corpus, cb_out);
            std::cout << "built corpus with " << corpus.size() << " entities\n";
            return 0;
        }
        if (cembed->parsed()) {
            guard_path(ce_out, ce_force);
            const uint64_t seed = ce_seed_set ? ce_seed : env_seed();
            auto corpus = load_corpus(ce_corpus);
            auto matrix = embed_entities(corpus, seed, ce_dim);
            save_embedding_cache(matrix, ce_out);
            std::cout << "embedded " << matrix.k << " entities at dim " << matrix.d << "\n";
            return 0;
        }
        if (tr->parsed()) {
            guard_path(targs.out_dir, targs.force);
            TrainConfig cfg = resolve_train_config(targs);
            return cfg.precision == Precision::F32 ? do_train<float>(targs, cfg)
                                                   : do_train<double>(targs, cfg);
        }
        if (ev->parsed()) {
            guard_path(ev_out, ev_force);
            LoadedModel lm = load_model(ev_ckpt);
            Dataset dataset = Dataset::load(ev_data);
            Metrics metrics;
            if (ev_zero_shot) {
                metrics = zero_shot_eval(lm.model, dataset.labels("unseen"), lm.train_labels,
                                         dataset, lm.text_seed, lm.cfg.temperature,
                                         lm.cfg.config_hash());
            } else {
                auto classes = embed_action_labels(lm.train_labels,
                                                   PromptTemplateSet::default_set(),
                                                   lm.text_seed, lm.cfg.model.enc.d);
                metrics = evaluate(lm.model, classes, dataset, ev_split, lm.cfg.temperature,
                                   lm.cfg.seed, lm.cfg.config_hash());
            }
            save_metrics(metrics, ev_out);
            std::cout << "top1 " << metrics.top1 << " top5 " << metrics.top5 << " loss "
                      << metrics.loss << "\n";
            return 0;
        }
        if (al->parsed()) {
            guard_path(al_out, al_force);
            LoadedModel lm = load_model(al_ckpt);
            Dataset dataset = Dataset::load(al_data);
            if (lm.cfg.model.query_mode == QueryMode::Aligned &&
                static_cast<int>(lm.entity_units.size()) != lm.model.entities.rows())
                throw ValidationError("checkpoint entity units disagree with the entity matrix");
            auto indices = dataset.split_indices(al_split);
            if (al_limit > 0 && static_cast<int>(indices.size()) > al_limit)
                indices.resize(al_limit);
            std::vector<AlignDumpFrame> dump;
            for (int idx : indices) {
                const auto& sample = dataset.sample(idx);
                for (size_t f = 0; f < sample.frames.size(); ++f) {
                    auto view = frame_alignment(lm.model, sample.frames[f]);
                    AlignDumpFrame frame;
                    frame.sample_id = dataset.ref(idx).id;
                    frame.frame_index = static_cast<int>(f);
                    for (int row = 0; row < view.regions.count(); ++row) {
                        AlignDumpRow r;
                        r.patches = view.regions.region_map[row];
                        r.entity_index = view.entity_index[row];
                        r.entity_unit = lm.entity_units.at(r.entity_index);
                        if (al_sim) {
                            for (int kk = 0; kk < view.a.cols(); ++kk)
                                r.sim_row.push_back(view.a.at(row, kk));
                        }
                        frame.rows.push_back(std::move(r));
                    }
                    dump.push_back(std::move(frame));
                }
            }
            save_align_dump(dump, al_out);
            std::cout << "dumped " << dump.size() << " frames\n";
            if (al_precision) {
                const double precision = alignment_precision(dump, dataset);
                json pj = {{"precision", precision}, {"frames", dump.size()}};
                write_json_file(pj, al_out + ".precision.json");
                std::cout << "alignment precision " << precision << "\n";
            }
            return 0;
        }
        if (bf->parsed()) {
            if (!bf_out.empty()) guard_path(bf_out, bf_force);
            json out;
            if (!bf_sweep.empty()) {
                std::vector<int> rs;
                for (const auto& tok : split_csv(bf_sweep)) rs.push_back(std::stoi(tok));
                std::map<int, double> acc;
                const std::map<int, double>* acc_ptr = nullptr;
                if (!bf_acc.empty()) {
                    json aj = load_json_file(bf_acc, "accuracy map");
                    for (auto it = aj.begin(); it != aj.end(); ++it)
                        acc[std::stoi(it.key())] = it.value().get<double>();
                    acc_ptr = &acc;
                }
                auto rows = r_sweep(bf_geom, rs, acc_ptr);
                std::cout << sweep_table_text(rows);
                out = sweep_table_json(rows);
            } else {
                auto rep = count_total_flops(bf_geom);
                std::cout << rep.to_text();
                out = rep.to_json();
            }
            if (!bf_out.empty()) write_json_file(out, bf_out);
            return 0;
        }
        if (bt->parsed()) {
            if (!bt_out.empty()) guard_path(bt_out, bt_force);
            LoadedModel lm = load_model(bt_ckpt);
            Dataset dataset = Dataset::load(bt_data);
            auto stats = wallclock_bench(lm.model, dataset, bt_reps, bt_clips);
            json out = {{"mean_seconds_per_clip", stats.mean_seconds_per_clip},
                        {"sd_seconds_per_clip", stats.sd_seconds_per_clip},
                        {"repetitions", stats.repetitions},
                        {"clips", stats.clips}};
            std::cout << "mean " << stats.mean_seconds_per_clip << " s/clip, sd "
                      << stats.sd_seconds_per_clip << " (" << stats.repetitions << " reps)\n";
            if (!bt_out.empty()) write_json_file(out, bt_out);
            return 0;
        }
        if (ab->parsed()) {
            guard_path(ab_out, ab_force);
            TrainConfig base;
            if (!ab_config.empty()) base = config_from_file(ab_config);
            Dataset dataset = Dataset::load(ab_data);
            Corpus corpus = corpus_for(ab_corpus, dataset, ab_data);
            const int threads =
                ab_threads > 0 ? ab_threads
                               : std::max(1u, std::thread::hardware_concurrency());
            auto rows = ablation_run(dataset, corpus, split_csv(ab_variants), base, ab_seeds,
                                     threads);
            ensure_dir(ab_out);
            write_json_file(ablation_table_json(rows),
                            (fs::path(ab_out) / "ablation.json").string());
            const std::string table = ablation_table_text(rows);
            std::ofstream txt(fs::path(ab_out) / "ablation.txt");
            txt << table;
            write_json_file(json{{"config", base.to_json()},
                                 {"variants", split_csv(ab_variants)},
                                 {"seeds", ab_seeds}},
                            (fs::path(ab_out) / "config.json").string());
            std::cout << table;
            return 0;
        }
        throw ValidationError("no subcommand selected");
    } catch (const IntegrityError& e) {
        std::cerr << "alt: error: integrity: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "alt: error: io: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "alt: error: numeric: " << e.what() << "\n";
        return 3;
    } catch (const ParseError& e) {
        std::cerr << "alt: error: parse: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "alt: error: validation: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace alt

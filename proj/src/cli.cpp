#include "longred/cli.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "longred/checkpoint.hpp"
#include "longred/config.hpp"
#include "longred/corpus.hpp"
#include "longred/digest.hpp"
#include "longred/drift.hpp"
#include "longred/errors.hpp"
#include "longred/eval.hpp"
#include "longred/positions.hpp"
#include "longred/rope.hpp"
#include "longred/trainer.hpp"

namespace longred {

namespace {

using Clock = std::chrono::steady_clock;

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return std::string(buf);
}

PackedDataset load_and_check(const std::filesystem::path& path, const char* which,
                             int want_length, int want_vocab) {
    PackedDataset ds = load_dataset(path);
    if (want_length > 0 && ds.sequence_length != want_length)
        throw ConfigError(std::string(which) + ": sequence length " +
                          std::to_string(ds.sequence_length) + " does not match configured " +
                          std::to_string(want_length));
    if (want_vocab > 0 && ds.vocab > want_vocab)
        throw ConfigError(std::string(which) + ": dataset vocabulary exceeds the model's");
    return ds;
}

// ---------------------------------------------------------------- train

template <typename T>
int train_run(const RunConfig& rc) {
    std::filesystem::create_directories(rc.out_dir);

    DecoderModel<T> student = [&]() {
        if (rc.init.empty()) {
            Rng init_rng(rc.seed, "init");
            return DecoderModel<T>(rc.model, init_rng);
        }
        return load_checkpoint<T>(rc.init);
    }();
    if (rc.extension.kind != ExtensionSpec::Kind::none)
        student.apply_config(apply_extension(student.config(), rc.extension));

    TrainPlan plan = rc.train;
    plan.validate(student.config().layers);

    if (student.config().window < plan.t_long)
        throw ConfigError("train: t_long exceeds the student context window");

    const bool longred_mode = plan.mode == TrainPlan::Mode::longred;
    const bool use_d2 = (longred_mode && plan.alpha1 > 0.0) ||
                        (plan.mode == TrainPlan::Mode::cpt_mix && !rc.data_d2.empty());
    const bool use_d3 = (longred_mode && plan.alpha2 > 0.0) ||
                        (plan.mode == TrainPlan::Mode::cpt_mix && !rc.data_d3.empty());

    PackedDataset d1 = load_and_check(rc.data_d1, "data.d1", plan.t_long, student.config().vocab);
    PackedDataset d2, d3;
    if (use_d2) d2 = load_and_check(rc.data_d2, "data.d2", plan.t_short, student.config().vocab);
    if (use_d3) d3 = load_and_check(rc.data_d3, "data.d3", plan.t_base, student.config().vocab);

    std::optional<DecoderModel<T>> teacher;
    if (longred_mode) {
        if (checkpoint_dtype(rc.teacher) != dtype_name<T>())
            throw ConfigError("teacher checkpoint dtype does not match the student's");
        teacher.emplace(load_checkpoint<T>(rc.teacher));
        teacher->set_trainable(false);
        if (!teacher->config().same_architecture(student.config()))
            throw ConfigError("teacher and student architectures differ");
    }

    // layer selection on a probe batch reserved from D2, frozen for the run
    std::size_t probe_reserved = 0;
    if (longred_mode && plan.alpha1 > 0.0 && plan.distill_layers.empty()) {
        const auto probe_n =
            std::min<std::size_t>(static_cast<std::size_t>(plan.probe_sequences), d2.count());
        if (probe_n == 0) throw ConfigError("train: no probe sequences available in data.d2");
        std::vector<std::vector<std::int32_t>> probe(d2.sequences.begin(),
                                                     d2.sequences.begin() +
                                                         static_cast<std::ptrdiff_t>(probe_n));
        plan.distill_layers =
            select_distill_layers(*teacher, student, probe, plan.distill_layer_count);
        probe_reserved = probe_n;
        std::ostringstream ls;
        for (const int l : plan.distill_layers) ls << " " << l;
        std::cerr << "distill layers:" << ls.str() << "\n";
    }

    std::array<double, 3> ratios = plan.mix_ratio;
    if (plan.mode == TrainPlan::Mode::cpt_long) ratios = {1.0, 0.0, 0.0};
    if (longred_mode) {
        if (plan.alpha1 <= 0.0) ratios[1] = 0.0;
        if (plan.alpha2 <= 0.0) ratios[2] = 0.0;
    }

    Rng batch_rng(rc.seed, "batch");
    Rng sampler_rng(rc.seed, "sampler");
    BatchSampler sampler(&d1, use_d2 ? &d2 : nullptr, use_d3 ? &d3 : nullptr, ratios,
                         plan.batch_tokens, batch_rng, {0, probe_reserved, 0});

    AdamW<T> optimizer(student, plan.optim);
    SamplerDiagnostics diag;

    const std::filesystem::path metrics_path = rc.out_dir / "metrics.txt";
    std::ofstream metrics(metrics_path, std::ios::trunc);
    if (!metrics) throw IoError("cannot write metrics stream: " + metrics_path.string());

    for (int step = 1; step <= plan.steps; ++step) {
        TrainBatch batch = sampler.next();
        std::vector<PositionPlan> plans;
        if (longred_mode && plan.alpha2 > 0.0) {
            plans.reserve(batch.d3.size());
            for (std::size_t i = 0; i < batch.d3.size(); ++i)
                plans.push_back(rc.skip.sampler == SkipConfig::Sampler::cream
                                    ? cream_skip(rc.skip, sampler_rng, &diag)
                                    : uniform_skip(rc.skip, sampler_rng));
        }
        const auto t0 = Clock::now();
        StepRecord rec;
        try {
            rec = train_step(student, teacher ? &*teacher : nullptr, plan, optimizer, batch,
                             plans, step);
        } catch (const NumericError& e) {
            metrics << "step=" << step << " status=nan_abort\n";
            metrics.flush();
            throw;
        }
        rec.wall_ms =
            std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
        metrics << format_step_record(rec) << "\n";
        if (step % 25 == 0 || step == 1 || step == plan.steps)
            std::cerr << "step " << step << "/" << plan.steps << " loss=" << fmt(rec.loss_final)
                      << " (" << fmt(rec.wall_ms) << " ms)\n";
    }
    metrics.close();
    if (diag.cream_fallbacks > 0)
        std::cerr << "cream fallbacks: " << diag.cream_fallbacks << "/" << diag.draws << "\n";

    const std::filesystem::path ck_path = rc.out_dir / "final.lrd";
    const std::uint64_t digest = save_checkpoint(student, ck_path);
    std::cout << "checkpoint=" << ck_path.string() << " digest=" << hex64(digest) << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, std::optional<std::int64_t> seed_override) {
    RunConfig rc = RunConfig::from_file(config_path);
    if (seed_override) rc.seed = static_cast<std::uint64_t>(*seed_override);
    rc.validate();

    std::string dtype = rc.dtype;
    if (!rc.init.empty()) {
        const std::string ck_dtype = checkpoint_dtype(rc.init);
        if (!dtype.empty() && dtype != ck_dtype)
            throw ConfigError("config dtype " + dtype + " does not match checkpoint dtype " +
                              ck_dtype);
        dtype = ck_dtype;
    }
    if (dtype == "f32") return train_run<float>(rc);
    if (dtype == "f64") return train_run<double>(rc);
    throw ConfigError("dtype must be f32 or f64");
}

// ---------------------------------------------------------------- extend

int cmd_extend(const std::string& in, const std::string& out, const std::string& kind,
               double new_base, double scale, int target) {
    ExtensionSpec spec;
    spec.kind = ExtensionSpec::parse_kind(kind);
    if (spec.kind == ExtensionSpec::Kind::none)
        throw ConfigError("extend: kind must be abf or pi");
    spec.new_base = new_base;
    spec.scale = scale;
    spec.target_window = target;

    const std::string dtype = checkpoint_dtype(in);
    auto run = [&](auto tag) {
        using T = decltype(tag);
        DecoderModel<T> model = load_checkpoint<T>(in);
        const ModelConfig before = model.config();
        model.apply_config(apply_extension(before, spec));
        save_checkpoint(model, out);
        std::cout << "window " << before.window << " -> " << model.config().window
                  << ", base " << fmt(before.rope_base) << " -> " << fmt(model.config().rope_base)
                  << ", pi_scale " << fmt(before.pi_scale) << " -> "
                  << fmt(model.config().pi_scale) << "\n";
    };
    if (dtype == "f32")
        run(float{});
    else
        run(double{});
    return 0;
}

// ---------------------------------------------------------------- drift

int cmd_drift(const std::string& a, const std::string& b, const std::string& corpus_path,
              int length, int samples) {
    const std::string dtype = checkpoint_dtype(a);
    if (checkpoint_dtype(b) != dtype)
        throw ConfigError("drift: checkpoints have different dtypes");

    auto run = [&](auto tag) {
        using T = decltype(tag);
        DecoderModel<T> ma = load_checkpoint<T>(a);
        DecoderModel<T> mb = load_checkpoint<T>(b);
        const int len = length > 0 ? length : std::min(ma.config().window, mb.config().window);

        std::ifstream in(corpus_path, std::ios::binary);
        if (!in) throw IoError("cannot open corpus: " + corpus_path);
        std::stringstream ss;
        ss << in.rdbuf();
        const Tokenizer tok = Tokenizer::byte_level();
        const auto tokens = tok.encode(ss.str());
        PackedDataset ds = pack_corpus(tokens, len, "D1", std::max(tok.vocab(), ma.config().vocab));
        if (ds.count() < static_cast<std::size_t>(samples))
            throw ConfigError("drift: corpus provides only " + std::to_string(ds.count()) +
                              " sequences");
        std::vector<std::vector<std::int32_t>> batch(
            ds.sequences.begin(), ds.sequences.begin() + samples);

        const DriftReport rep = drift_report(ma, mb, batch);
        std::cout << "layers=" << rep.layers << " heads=" << rep.heads
                  << " samples=" << rep.sample_count << " seqlen=" << rep.sequence_length << "\n";
        const auto lk = rep.layer_kld();
        for (int l = 0; l <= rep.layers; ++l) {
            std::cout << "layer=" << l
                      << " sim=" << fmt(rep.layer_similarity[static_cast<std::size_t>(l)]);
            if (l >= 1) {
                std::cout << " kld=" << fmt(lk[static_cast<std::size_t>(l - 1)]) << " heads=";
                const auto& hk = rep.head_kld[static_cast<std::size_t>(l - 1)];
                for (std::size_t h = 0; h < hk.size(); ++h)
                    std::cout << (h ? "," : "") << fmt(hk[h]);
            }
            std::cout << "\n";
        }
        std::cout << "summary sim_mean=" << fmt(rep.mean_similarity())
                  << " kld_mean=" << fmt(rep.mean_kld()) << "\n";
    };
    if (dtype == "f32")
        run(float{});
    else
        run(double{});
    return 0;
}

// ---------------------------------------------------------------- bound

int cmd_bound(const std::vector<double>& bases, int dim, int len) {
    for (const double base : bases) {
        BoundConfig cfg;
        cfg.base = base;
        cfg.head_dim = dim;
        cfg.max_len = len;
        std::printf("%.10g,%.10g\n", base, rope_bound(cfg));
    }
    return 0;
}

// ---------------------------------------------------------------- sample-positions

int cmd_sample_positions(int t, int tl, int tb, const std::string& tb_policy,
                         const std::string& sampler, double sigma, int grid, int count,
                         std::int64_t seed) {
    SkipConfig cfg;
    cfg.input_len = t;
    cfg.target_len = tl;
    cfg.tb_policy = SkipConfig::parse_tb_policy(tb_policy);
    cfg.tb_value = tb;
    cfg.sampler = SkipConfig::parse_sampler(sampler);
    cfg.sigma = sigma;
    cfg.grid_points = grid;
    cfg.validate();

    Rng rng(static_cast<std::uint64_t>(seed), "sampler");
    SamplerDiagnostics diag;
    for (int i = 0; i < count; ++i) {
        const PositionPlan plan = cfg.sampler == SkipConfig::Sampler::cream
                                      ? cream_skip(cfg, rng, &diag)
                                      : uniform_skip(cfg, rng);
        for (std::size_t j = 0; j < plan.indices.size(); ++j)
            std::printf("%s%lld", j ? " " : "", static_cast<long long>(plan.indices[j]));
        std::printf("\n");
    }
    if (diag.cream_fallbacks > 0)
        std::cerr << "cream fallbacks: " << diag.cream_fallbacks << "/" << diag.draws << "\n";
    return 0;
}

// ---------------------------------------------------------------- pack

int cmd_pack(const std::string& corpus_path, int length, const std::string& name,
             const std::string& out, const std::string& mode, const std::string& alphabet) {
    std::ifstream in(corpus_path, std::ios::binary);
    if (!in) throw IoError("cannot open corpus: " + corpus_path);
    std::stringstream ss;
    ss << in.rdbuf();

    const Tokenizer tok = mode == "chars" ? Tokenizer::char_level(alphabet)
                                          : Tokenizer::byte_level();
    const auto tokens = tok.encode(ss.str());
    PackedDataset ds = pack_corpus(tokens, length, name, tok.vocab());
    save_dataset(ds, out);
    std::cout << "name=" << ds.name << " sequences=" << ds.count()
              << " sequence_length=" << ds.sequence_length << " vocab=" << ds.vocab
              << " digest=" << hex64(ds.digest) << "\n";
    return 0;
}

// ---------------------------------------------------------------- gen-corpus

int cmd_gen_corpus(const std::string& out, std::int64_t bytes, std::int64_t seed) {
    SyntheticSpec spec;
    spec.seed = static_cast<std::uint64_t>(seed);
    spec.target_bytes = static_cast<std::size_t>(bytes);
    const std::string text = generate_corpus(spec);
    std::ofstream f(out, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write corpus: " + out);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) throw IoError("short write: " + out);
    std::cout << "bytes=" << text.size() << " digest=" << hex64(fnv1a64(text)) << "\n";
    return 0;
}

}  // namespace

int run_command(int argc, const char* const* argv) {
    CLI::App app{"desk-scale long-context extension lab"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "run a training loop from a config file");
    std::string train_config;
    std::int64_t train_seed = -1;
    bool train_seed_set = false;
    train->add_option("--config", train_config, "run config file")->required();
    train->add_option("--seed", train_seed, "override the config seed")
        ->each([&](const std::string&) { train_seed_set = true; });

    // extend
    auto* extend = app.add_subcommand("extend", "rewrite a checkpoint's positional scaling");
    std::string ext_in, ext_out, ext_kind;
    double ext_base = 0.0, ext_scale = 1.0;
    int ext_target = 0;
    extend->add_option("--in", ext_in)->required();
    extend->add_option("--out", ext_out)->required();
    extend->add_option("--kind", ext_kind, "abf or pi")->required();
    extend->add_option("--new-base", ext_base, "rotary base for abf");
    extend->add_option("--scale", ext_scale, "interpolation factor for pi");
    extend->add_option("--target", ext_target, "target context window")->required();

    // drift
    auto* drift = app.add_subcommand("drift", "compare two checkpoints on a corpus");
    std::string drift_a, drift_b, drift_corpus;
    int drift_len = 0, drift_samples = 16;
    drift->add_option("--a", drift_a, "reference checkpoint")->required();
    drift->add_option("--b", drift_b, "candidate checkpoint")->required();
    drift->add_option("--corpus", drift_corpus, "plain text corpus")->required();
    drift->add_option("--length", drift_len, "sequence length (default: min window)");
    drift->add_option("--samples", drift_samples, "sample count");

    // bound
    auto* bound = app.add_subcommand("bound", "rotary drift bound per base, CSV");
    std::vector<double> bound_bases;
    int bound_dim = 64, bound_len = 512;
    bound->add_option("--base", bound_bases, "rotary base (repeatable)")->required();
    bound->add_option("--dim", bound_dim, "head dimension");
    bound->add_option("--len", bound_len, "max sequence length");

    // sample-positions
    auto* sp = app.add_subcommand("sample-positions", "emit skipped positional index plans");
    int sp_t = 0, sp_tl = 0, sp_tb = 0, sp_grid = 1000, sp_count = 1;
    std::string sp_policy = "fixed", sp_sampler = "uniform";
    double sp_sigma = 3.0;
    std::int64_t sp_seed = 0;
    sp->add_option("--t", sp_t, "input length")->required();
    sp->add_option("--tl", sp_tl, "target length")->required();
    sp->add_option("--tb", sp_tb, "head/tail length (fixed policy)");
    sp->add_option("--tb-policy", sp_policy, "fixed or cream_random");
    sp->add_option("--sampler", sp_sampler, "uniform or cream");
    sp->add_option("--sigma", sp_sigma, "cream Gaussian width");
    sp->add_option("--grid", sp_grid, "cream interpolation grid points");
    sp->add_option("--count", sp_count, "plans to emit");
    sp->add_option("--seed", sp_seed, "sampler seed");

    // pack
    auto* pack = app.add_subcommand("pack", "tokenize and pack a corpus");
    std::string pack_corpus_path, pack_name, pack_out, pack_mode = "byte", pack_alphabet;
    int pack_len = 0;
    pack->add_option("--corpus", pack_corpus_path)->required();
    pack->add_option("--length", pack_len, "sequence length")->required();
    pack->add_option("--name", pack_name, "D1, D2 or D3")->required();
    pack->add_option("--out", pack_out, "output path (payload; sidecar adds .meta)")->required();
    pack->add_option("--mode", pack_mode, "byte or chars");
    pack->add_option("--alphabet", pack_alphabet, "alphabet for chars mode");

    // gen-corpus
    auto* gen = app.add_subcommand("gen-corpus", "write a synthetic corpus");
    std::string gen_out;
    std::int64_t gen_bytes = 1 << 20, gen_seed = 1;
    gen->add_option("--out", gen_out)->required();
    gen->add_option("--bytes", gen_bytes, "corpus size in bytes");
    gen->add_option("--seed", gen_seed, "generator seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (train->parsed())
            return cmd_train(train_config,
                             train_seed_set ? std::optional<std::int64_t>(train_seed)
                                            : std::nullopt);
        if (extend->parsed())
            return cmd_extend(ext_in, ext_out, ext_kind, ext_base, ext_scale, ext_target);
        if (drift->parsed())
            return cmd_drift(drift_a, drift_b, drift_corpus, drift_len, drift_samples);
        if (bound->parsed()) return cmd_bound(bound_bases, bound_dim, bound_len);
        if (sp->parsed())
            return cmd_sample_positions(sp_t, sp_tl, sp_tb, sp_policy, sp_sampler, sp_sigma,
                                        sp_grid, sp_count, sp_seed);
        if (pack->parsed())
            return cmd_pack(pack_corpus_path, pack_len, pack_name, pack_out, pack_mode,
                            pack_alphabet);
        if (gen->parsed()) return cmd_gen_corpus(gen_out, gen_bytes, gen_seed);
        throw ConfigError("no subcommand given");
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace longred

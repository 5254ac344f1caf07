#include "twotower/cli.hpp"

#include <chrono>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "twotower/dataset.hpp"
#include "twotower/gradcheck_suite.hpp"
#include "twotower/image_io.hpp"
#include "twotower/metrics.hpp"

namespace twotower::cli {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    write_file(path.string(), std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

void make_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + dir + ": " + ec.message());
}

void require(bool ok, const std::string& message) {
    if (!ok) throw std::invalid_argument(message);
}

/// Resolves the clue mode a model trained on `data` should use.
ClueMode resolve_clue(const RunConfig& cfg, const Dataset& data) {
    if (cfg.clue_mode.empty()) return data.clue_mode;
    const ClueMode requested = parse_clue_mode(cfg.clue_mode);
    if (requested != ClueMode::kNone && requested != data.clue_mode) {
        throw std::invalid_argument("clue mode '" + cfg.clue_mode + "' requested but dataset " + cfg.data_dir +
                                    " carries '" + clue_mode_name(data.clue_mode) + "' clues");
    }
    return requested;
}

void check_dataset_fits(const ModelConfig& model, const Dataset& data, const std::string& what) {
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
        const auto& s = data.samples[i];
        try {
            model.check_input(s.height(), s.width());
        } catch (const ConfigError& e) {
            throw ConfigError(what + " (levels " + std::to_string(model.levels) + ", input multiple of " +
                              std::to_string(model.divisor()) + ") does not fit dataset sample " +
                              sample_stem(i) + " of shape " + shape_str(s.left.shape()) + ": " + e.what());
        }
    }
}

}  // namespace

std::string RunConfig::to_cfg() const {
    std::ostringstream os;
    os.precision(17);
    os << "# twotower " << command << "\n";
    auto kv = [&](const char* key, const auto& value) { os << key << '=' << value << '\n'; };
    auto str = [&](const char* key, const std::string& value) {
        if (!value.empty()) os << key << "=\"" << value << "\"\n";
    };
    str("data", data_dir);
    str("checkpoint", checkpoint);
    str("out", out_dir);
    str("predictions", predictions_dir);
    str("left", left);
    str("right", right);
    str("clue", clue);
    str("clue-mode", clue_mode);
    str("baseline", baseline);
    kv("seed", seed);
    kv("count", count);
    kv("size", size);
    kv("levels", model.levels);
    kv("base-channels", model.base_channels);
    kv("epochs", train.epochs);
    kv("batch", train.batch);
    kv("lr", train.adam.lr);
    kv("beta1", train.adam.beta1);
    kv("beta2", train.adam.beta2);
    kv("adam-eps", train.adam.epsilon);
    kv("seeds", seeds);
    kv("ablation-seeds", ablation_seeds);
    return os.str();
}

void cmd_gen_data(const RunConfig& cfg, std::ostream& out) {
    require(!cfg.out_dir.empty(), "gen-data: --out is required");
    const ClueMode mode = cfg.clue_mode.empty() ? ClueMode::kBlockMatch : parse_clue_mode(cfg.clue_mode);
    require(cfg.size >= 8 && cfg.size % 8 == 0, "gen-data: --size must be a positive multiple of 8");

    const Dataset data = generate_dataset(cfg.count, cfg.size, cfg.seed, mode);
    make_out_dir(cfg.out_dir);
    save_dataset(cfg.out_dir, data);
    write_text(fs::path(cfg.out_dir) / "run.cfg", cfg.to_cfg());

    out << "generated " << data.samples.size() << " samples of " << cfg.size << "x" << cfg.size
        << " (clue: " << clue_mode_name(mode) << ") in " << cfg.out_dir << "\n";
    for (std::size_t i = 0; i < data.scenes.size(); ++i) {
        const SceneSpec& s = data.scenes[i];
        out << "  " << sample_stem(i) << ": " << s.objects.size() << " objects, background disparity "
            << s.disparity(s.background_depth) << ", object disparities";
        for (const auto& o : s.objects) out << ' ' << s.disparity(o.depth);
        out << "\n";
    }
}

void cmd_train(const RunConfig& cfg, std::ostream& out) {
    require(!cfg.data_dir.empty(), "train: --data is required");
    require(!cfg.out_dir.empty(), "train: --out is required");
    cfg.model.validate();
    cfg.train.validate();

    const Dataset data = load_dataset(cfg.data_dir);
    require(data.samples.size() >= 2, "train: dataset needs at least 2 samples");
    const ClueMode mode = resolve_clue(cfg, data);
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    tc.clue_enabled = mode != ClueMode::kNone;
    ModelConfig mc = cfg.model;
    mc.use_clue = tc.clue_enabled;
    check_dataset_fits(mc, data, "model");

    const auto [train_set, test_set] = split(data.samples, kTrainFraction, cfg.seed);
    make_out_dir(cfg.out_dir);
    RunConfig echoed = cfg;
    echoed.clue_mode = clue_mode_name(mode);
    write_text(fs::path(cfg.out_dir) / "run.cfg", echoed.to_cfg());

    out << "training L=" << mc.levels << " C=" << mc.base_channels << " clue=" << clue_mode_name(mode)
        << " on " << train_set.size() << " train / " << test_set.size() << " test samples, "
        << param_count(make_model(mc, tc)).trainable << " parameters\n";
    const TrainResult result = train(make_model(mc, tc), train_set, test_set, tc);
    for (std::size_t e = 0; e < result.curve.size(); ++e) {
        const auto& r = result.curve[e];
        out << "  epoch " << e + 1 << " (step " << r.step << ")  train " << r.train_loss << "  val " << r.val_loss << "\n";
    }

    save_checkpoint((fs::path(cfg.out_dir) / "checkpoint.bin").string(), result.best);
    write_text(fs::path(cfg.out_dir) / "loss.csv", loss_curve_csv(result.curve));
    if (!test_set.empty()) {
        const DepthMetrics m = evaluate(result.best, test_set);
        const std::vector<std::pair<std::string, DepthMetrics>> rows{{"two_tower", m}};
        write_text(fs::path(cfg.out_dir) / "metrics.csv", metrics_csv(rows));
        write_text(fs::path(cfg.out_dir) / "metrics.txt", metrics_table(rows));
        out << metrics_table(rows);
    }
    out << "best epoch " << result.best_epoch << "; checkpoint written to "
        << (fs::path(cfg.out_dir) / "checkpoint.bin").string() << "\n";
}

void cmd_eval(const RunConfig& cfg, std::ostream& out) {
    require(!cfg.data_dir.empty(), "eval: --data is required");
    require(cfg.checkpoint.empty() != cfg.predictions_dir.empty(),
            "eval: exactly one of --checkpoint or --predictions is required");

    const Dataset data = load_dataset(cfg.data_dir);
    require(!data.samples.empty(), "eval: dataset " + cfg.data_dir + " is empty");

    DepthMetrics m;
    std::string label;
    if (!cfg.checkpoint.empty()) {
        const ModelParams params = load_checkpoint(cfg.checkpoint);
        check_dataset_fits(params.config, data, "checkpoint " + cfg.checkpoint);
        if (params.config.use_clue && data.clue_mode == ClueMode::kNone) {
            throw ConfigError("checkpoint " + cfg.checkpoint + " expects a clue channel but dataset " +
                              cfg.data_dir + " has no clues");
        }
        m = evaluate(params, data.samples);
        label = "two_tower";
    } else {
        std::vector<Tensor> preds, gts;
        for (std::size_t i = 0; i < data.samples.size(); ++i) {
            Tensor p = read_pfm((fs::path(cfg.predictions_dir) / (sample_stem(i) + ".pfm")).string());
            if (p.shape() != data.samples[i].gt_depth.shape()) {
                throw ShapeError("eval: prediction " + sample_stem(i) + " has shape " + shape_str(p.shape()) +
                                 ", ground truth is " + shape_str(data.samples[i].gt_depth.shape()));
            }
            preds.push_back(std::move(p));
            gts.push_back(data.samples[i].gt_depth);
        }
        m = evaluate(preds, gts);
        label = "predictions";
    }

    const std::vector<std::pair<std::string, DepthMetrics>> rows{{label, m}};
    out << metrics_table(rows);
    if (!cfg.out_dir.empty()) {
        make_out_dir(cfg.out_dir);
        write_text(fs::path(cfg.out_dir) / "metrics.csv", metrics_csv(rows));
        write_text(fs::path(cfg.out_dir) / "metrics.txt", metrics_table(rows));
        write_text(fs::path(cfg.out_dir) / "run.cfg", cfg.to_cfg());
    }
}

void cmd_infer(const RunConfig& cfg, std::ostream& out) {
    require(!cfg.checkpoint.empty(), "infer: --checkpoint is required");
    require(!cfg.left.empty() && !cfg.right.empty(), "infer: --left and --right are required");
    require(!cfg.out_dir.empty(), "infer: --out is required");

    const ModelParams params = load_checkpoint(cfg.checkpoint);
    require(!params.config.use_clue || !cfg.clue.empty(), "infer: checkpoint uses a clue channel; --clue is required");
    const Tensor left = read_ppm(cfg.left);
    const Tensor right = read_ppm(cfg.right);
    if (left.shape() != right.shape()) {
        throw ShapeError("infer: left " + shape_str(left.shape()) + " and right " + shape_str(right.shape()) +
                         " differ");
    }
    const std::size_t h = left.dim(1), w = left.dim(2);
    Tensor clue({1, h, w}, 0.5);
    if (params.config.use_clue) {
        clue = read_pfm(cfg.clue);
        if (clue.shape() != Shape{1, h, w}) {
            throw ShapeError("infer: clue " + shape_str(clue.shape()) + " does not match images " +
                             shape_str(left.shape()));
        }
    }
    try {
        params.config.check_input(h, w);
    } catch (const ConfigError& e) {
        throw ConfigError("infer: checkpoint (levels " + std::to_string(params.config.levels) +
                          ") cannot take images of shape " + shape_str(left.shape()) + ": " + e.what());
    }

    const auto start = std::chrono::steady_clock::now();
    const Tensor depth = predict(params, left.reshaped({1, 3, h, w}), clue.reshaped({1, 1, h, w}),
                                 right.reshaped({1, 3, h, w}));
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    make_out_dir(cfg.out_dir);
    const Tensor map = depth.reshaped({1, h, w});
    write_pfm((fs::path(cfg.out_dir) / "depth.pfm").string(), map);
    write_pgm((fs::path(cfg.out_dir) / "depth.pgm").string(), map);
    write_text(fs::path(cfg.out_dir) / "run.cfg", cfg.to_cfg());
    out << "depth map " << w << "x" << h << " written to " << cfg.out_dir << "\n";
    out << "inference time: " << seconds << " s\n";
}

bool cmd_gradcheck(const RunConfig& cfg, std::ostream& out) {
    require(cfg.seeds >= 1, "gradcheck: --seeds must be >= 1");
    const auto rows = run_gradcheck_suite(cfg.seeds);
    const std::string table = gradcheck_table(rows);
    out << table;
    if (!cfg.out_dir.empty()) {
        make_out_dir(cfg.out_dir);
        write_text(fs::path(cfg.out_dir) / "gradcheck.txt", table);
        write_text(fs::path(cfg.out_dir) / "run.cfg", cfg.to_cfg());
    }
    return std::all_of(rows.begin(), rows.end(), [](const GradCheckRow& r) { return r.pass; });
}

void cmd_ablate(const RunConfig& cfg, std::ostream& out) {
    require(!cfg.data_dir.empty(), "ablate: --data is required");
    require(!cfg.out_dir.empty(), "ablate: --out is required");
    require(cfg.ablation_seeds >= 3, "ablate: --ablation-seeds must be >= 3");
    require(cfg.baseline == "constant" || cfg.baseline == "none", "ablate: --baseline must be constant or none");
    cfg.model.validate();
    cfg.train.validate();

    const Dataset data = load_dataset(cfg.data_dir);
    require(data.clue_mode != ClueMode::kNone, "ablate: dataset " + cfg.data_dir + " has no clues");
    require(data.samples.size() >= 2, "ablate: dataset needs at least 2 samples");
    check_dataset_fits(cfg.model, data, "model");
    const auto [train_set, test_set] = split(data.samples, kTrainFraction, cfg.seed);
    require(!test_set.empty(), "ablate: the test split is empty; use a larger dataset");

    make_out_dir(cfg.out_dir);
    write_text(fs::path(cfg.out_dir) / "run.cfg", cfg.to_cfg());

    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < cfg.ablation_seeds; ++i) seeds.push_back(cfg.seed + i);
    const ClueBaseline baseline = cfg.baseline == "none" ? ClueBaseline::kNone : ClueBaseline::kConstant;
    const auto records = ablate_clue(train_set, test_set, cfg.model, cfg.train, seeds, baseline);

    std::ostringstream csv;
    csv.precision(17);
    csv << "seed,with_clue_test_l1," << cfg.baseline << "_clue_test_l1\n";
    double mean_with = 0, mean_base = 0;
    for (const auto& r : records) {
        csv << r.seed << ',' << r.with_clue << ',' << r.baseline << '\n';
        out << "seed " << r.seed << ": with clue " << r.with_clue << ", " << cfg.baseline << " clue "
            << r.baseline << "\n";
        mean_with += r.with_clue / static_cast<double>(records.size());
        mean_base += r.baseline / static_cast<double>(records.size());
    }
    write_text(fs::path(cfg.out_dir) / "ablation.csv", csv.str());
    out << "mean test L1: with clue " << mean_with << ", " << cfg.baseline << " clue " << mean_base << "\n";
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    RunConfig cfg;
    CLI::App app{"Two-tower stereo depth estimation: data synthesis, training, evaluation"};
    app.set_config("--config", "", "key=value file; command-line flags take precedence");
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    app.add_option("--seed", seed, "Seed for data, initialization and shuffling");
    app.add_option("--out", cfg.out_dir, "Output directory");
    app.add_option("--data", cfg.data_dir, "Dataset directory");
    app.add_option("--checkpoint", cfg.checkpoint, "Checkpoint file");
    app.add_option("--predictions", cfg.predictions_dir, "Directory of NNNN.pfm predictions (eval)");
    app.add_option("--left", cfg.left, "Left image, PPM (infer)");
    app.add_option("--right", cfg.right, "Right image, PPM (infer)");
    app.add_option("--clue", cfg.clue, "Clue map, PFM (infer)");
    app.add_option("--clue-mode", cfg.clue_mode, "blockmatch | degrade | none")
        ->check(CLI::IsMember({"blockmatch", "degrade", "none"}));
    app.add_option("--baseline", cfg.baseline, "Ablation control arm: constant | none")
        ->check(CLI::IsMember({"constant", "none"}));
    app.add_option("--count", cfg.count, "Number of samples (gen-data)");
    app.add_option("--size", cfg.size, "Square image side (gen-data)");
    app.add_option("--levels", cfg.model.levels, "Downsampling steps L")->check(CLI::Range(1, 12));
    app.add_option("--base-channels", cfg.model.base_channels, "Channels C after the first conv pair")
        ->check(CLI::Range(1, 1024));
    app.add_option("--epochs", cfg.train.epochs, "Training epochs")->check(CLI::PositiveNumber);
    app.add_option("--batch", cfg.train.batch, "Batch size")->check(CLI::PositiveNumber);
    app.add_option("--lr", cfg.train.adam.lr, "Adam learning rate")->check(CLI::NonNegativeNumber);
    app.add_option("--beta1", cfg.train.adam.beta1, "Adam beta1");
    app.add_option("--beta2", cfg.train.adam.beta2, "Adam beta2");
    app.add_option("--adam-eps", cfg.train.adam.epsilon, "Adam epsilon");
    app.add_option("--seeds", cfg.seeds, "Seeds per operator (gradcheck)");
    app.add_option("--ablation-seeds", cfg.ablation_seeds, "Matched seeds (ablate)");

    auto sub = [&](const char* name, const char* help) {
        auto* s = app.add_subcommand(name, help);
        s->fallthrough();
        return s;
    };
    auto* gen = sub("gen-data", "Render a synthetic stereo dataset");
    auto* trn = sub("train", "Train on a dataset (90:10 split)");
    auto* evl = sub("eval", "Evaluate a checkpoint or saved predictions");
    auto* inf = sub("infer", "Predict depth for one stereo pair");
    auto* gck = sub("gradcheck", "Finite-difference check of every operator");
    auto* abl = sub("ablate", "With-clue vs control-arm training comparison");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }
    cfg.seed = seed;
    cfg.train.seed = seed;

    try {
        if (gen->parsed()) {
            cfg.command = "gen-data";
            cmd_gen_data(cfg, out);
        } else if (trn->parsed()) {
            cfg.command = "train";
            cmd_train(cfg, out);
        } else if (evl->parsed()) {
            cfg.command = "eval";
            cmd_eval(cfg, out);
        } else if (inf->parsed()) {
            cfg.command = "infer";
            cmd_infer(cfg, out);
        } else if (gck->parsed()) {
            cfg.command = "gradcheck";
            if (!cmd_gradcheck(cfg, out)) return 1;
        } else if (abl->parsed()) {
            cfg.command = "ablate";
            cmd_ablate(cfg, out);
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

}  // namespace twotower::cli

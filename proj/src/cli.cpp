#include "bgfg/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "bgfg/baselines.hpp"
#include "bgfg/checkpoint.hpp"
#include "bgfg/config.hpp"
#include "bgfg/dataset.hpp"
#include "bgfg/evaluation.hpp"

namespace bgfg {

namespace fs = std::filesystem;

namespace {

struct Options {
    std::string config;
    std::vector<std::string> data;
    std::string checkpoint;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string profile;
    std::vector<std::string> sets;
    bool lenient = false;
    std::string split = "test";
    std::optional<Real> threshold;
    std::string masks;
    std::string method;
    std::string preset = "moving_square";
    std::optional<std::size_t> frames;
    std::optional<std::size_t> canvas;
    std::size_t k = 2;
    std::size_t rank = 2;
    Real sparse_threshold = 0.05;
};

std::string numbered(const char* prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%06zu.png", prefix, i);
    return buf;
}

TrainingConfig resolve_config(const Options& o) {
    std::vector<Setting> overrides;
    if (!o.profile.empty()) overrides.emplace_back("profile", o.profile);
    if (o.seed) overrides.emplace_back("seed", std::to_string(*o.seed));
    for (const auto& s : o.sets) overrides.push_back(parse_override(s));
    return o.config.empty() ? parse_config("", overrides) : load_config(o.config, overrides);
}

std::vector<Sequence> load_all(const Options& o) {
    if (o.data.empty()) throw ConfigError("--data is required");
    std::vector<Sequence> out;
    for (const auto& d : o.data) out.push_back(load_sequence(d, o.lenient ? LabelMode::lenient : LabelMode::strict));
    return out;
}

std::vector<FrameSample> select(const Sequence& s, const std::string& split) {
    if (split == "all") return s.frames;
    SplitFrames parts = split_frames(s.frames);
    return split == "train" ? parts.train : parts.test;
}

fs::path require_out(const Options& o) {
    if (o.out.empty()) throw ConfigError("--out is required");
    fs::create_directories(o.out);
    return o.out;
}

Tensor to_frame_size(const Tensor& image, const FrameSample& f) {
    return bilinear_resize(image, f.height(), f.width());
}

// Sequences whose training frames hold no foreground get 1 or 2 procedural
// objects pasted into each of them.
void augment_empty(std::vector<FrameSample>& train, std::uint64_t seed, std::ostream& err) {
    std::size_t fg = 0;
    for (const auto& f : train) fg += f.labels.count(kForeground);
    if (fg > 0 || train.empty()) return;
    const std::size_t side = std::min(train[0].height(), train[0].width());
    const auto sprites = sprite_library(seed, 8, std::max<std::size_t>(2, side / 4));
    for (std::size_t i = 0; i < train.size(); ++i) train[i] = paste_objects(train[i], sprites, seed * 7919 + i);
    err << "# " << train[0].sequence_id << ": no foreground in training frames, pasted objects\n";
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
    const TrainingConfig cfg = resolve_config(o);
    err << "# resolved configuration\n" << describe(cfg);
    const fs::path dir = require_out(o);
    std::vector<FrameSample> train;
    for (const auto& s : load_all(o)) {
        auto part = select(s, "train");
        augment_empty(part, cfg.seed, err);
        train.insert(train.end(), part.begin(), part.end());
    }
    std::ofstream(dir / "config.cfg") << describe(cfg);
    const auto result = run_training_schedule(cfg, train, [&](int step, const TwoStageModel& m) {
        save_model((dir / ("step" + std::to_string(step) + ".ckpt")).string(), m, cfg.seed, step);
    });
    write_loss_csv((dir / "loss.csv").string(), result.history);
    out << "trained on " << train.size() << " frames, " << result.history.size() << " iterations, final loss "
        << (result.history.empty() ? 0.0 : result.history.back().joint) << '\n';
    return kExitOk;
}

MaskRule mask_rule(const Options& o) { return o.threshold ? MaskRule::threshold(*o.threshold) : MaskRule::argmax(); }

int cmd_infer(const Options& o, std::ostream& out, bool masks_too) {
    if (o.checkpoint.empty()) throw ConfigError("--checkpoint is required");
    TwoStageModel model = load_model(o.checkpoint);
    const fs::path dir = require_out(o);
    std::size_t n = 0;
    for (const auto& s : load_all(o)) {
        const fs::path sub = dir / s.name;
        fs::create_directories(sub);
        for (const auto& f : select(s, o.split)) {
            const InferenceResult r = infer_end_to_end(model, f.image, mask_rule(o));
            write_rgb((sub / numbered("bg", f.frame_index)).string(), to_frame_size(r.background, f));
            if (masks_too) write_mask((sub / numbered("mask", f.frame_index)).string(), r.mask.resized(f.height(), f.width()));
            ++n;
        }
    }
    out << "wrote " << n << " frames to " << dir.string() << '\n';
    return kExitOk;
}

Mask read_mask(const fs::path& p, const FrameSample& f) {
    if (!fs::exists(p)) throw DataError("missing mask " + p.string());
    const GrayImage g = read_gray(p.string());
    if (g.height != f.height() || g.width != f.width()) throw DataError("mask " + p.string() + " has the wrong size");
    Mask m(g.height, g.width);
    for (std::size_t i = 0; i < g.values.size(); ++i) m.values[i] = g.values[i] > 127;
    return m;
}

int cmd_eval(const Options& o, std::ostream& out) {
    if (o.masks.empty() == o.checkpoint.empty()) throw ConfigError("eval needs exactly one of --masks or --checkpoint");
    std::optional<TwoStageModel> model;
    if (!o.checkpoint.empty()) model = load_model(o.checkpoint);
    std::vector<FrameResult> results;
    for (const auto& s : load_all(o)) {
        std::vector<FrameSample> frames = select(s, o.split);
        std::erase_if(frames, [](const FrameSample& f) { return !is_labelled(f); });
        for (const auto& f : frames) {
            Mask m = model ? infer_end_to_end(*model, f.image, mask_rule(o)).mask.resized(f.height(), f.width())
                           : read_mask(fs::path(o.masks) / s.name / numbered("mask", f.frame_index), f);
            results.push_back({s.category, s.name, f.frame_index, std::move(m), f.labels});
        }
    }
    const EvalSummary summary = evaluate(results);
    write_report_table(out, summary);
    if (!o.out.empty()) {
        const fs::path dir = require_out(o);
        std::ofstream csv(dir / "report.csv"), table(dir / "report.txt");
        write_report_csv(csv, summary);
        write_report_table(table, summary);
        if (!csv || !table) throw DataError("failed writing reports to " + dir.string());
    }
    return kExitOk;
}

struct SweepData {
    std::vector<Tensor> frames, backgrounds;
    std::vector<LabelMap> labels;
};

void add_scored(SweepData& d, const FrameSample& f, Tensor background) {
    if (!is_labelled(f)) return;
    d.frames.push_back(f.image);
    d.backgrounds.push_back(std::move(background));
    d.labels.push_back(f.labels);
}

std::vector<Tensor> images(std::span<const FrameSample> frames) {
    std::vector<Tensor> out;
    for (const auto& f : frames) out.push_back(f.image);
    return out;
}

int cmd_sweep(const Options& o, std::ostream& out, std::ostream& err) {
    if (o.method != "pca" && o.method != "rpca" && o.method != "baseline1")
        throw ConfigError("--method must be pca, rpca or baseline1");
    std::optional<TrainingConfig> cfg;
    if (o.method == "baseline1" && o.checkpoint.empty()) {
        cfg = resolve_config(o);
        err << "# resolved configuration\n" << describe(*cfg);
    }
    const auto sequences = load_all(o);
    const fs::path dir = require_out(o);
    SweepData d;
    if (o.method == "baseline1") {
        TwoStageModel model;
        if (!o.checkpoint.empty()) {
            model = load_model(o.checkpoint);
        } else {
            // Stage 1 only: the threshold classifier replaces the segmentation net.
            TrainingConfig c = *cfg;
            c.steps[1].iterations = c.steps[2].iterations = 0;
            std::vector<FrameSample> train;
            for (const auto& s : sequences) {
                auto part = select(s, "train");
                train.insert(train.end(), part.begin(), part.end());
            }
            model = run_training_schedule(c, train).model;
        }
        for (const auto& s : sequences)
            for (const auto& f : select(s, "test"))
                add_scored(d, f, to_frame_size(infer_end_to_end(model, f.image).background, f));
    } else {
        for (const auto& s : sequences) {
            const SplitFrames parts = split_frames(s.frames);
            if (o.method == "pca") {
                const auto model = pca_fit(images(parts.train), o.k);
                for (const auto& f : parts.test) add_scored(d, f, pca_background(model, f.image));
            } else {
                RpcaState state(s.frames.at(0).image.shape(), o.rank, o.sparse_threshold);
                for (const auto& f : parts.train) rpca_update(state, f.image);
                for (const auto& f : parts.test) add_scored(d, f, rpca_update(state, f.image).low_rank);
            }
        }
    }
    const SweepCurve curve = threshold_sweep(d.frames, d.backgrounds, d.labels);
    const fs::path csv_path = dir / ("sweep_" + o.method + ".csv");
    std::ofstream csv(csv_path);
    csv << "theta,f_measure\n";
    csv.precision(17);
    for (const auto& p : curve.points) csv << p.theta << ',' << p.f_measure << '\n';
    if (!csv) throw DataError("failed writing " + csv_path.string());
    out << o.method << ": best F " << curve.best_f << " at theta " << curve.best_theta << '\n';
    return kExitOk;
}

int cmd_synth(const Options& o, std::ostream& out) {
    const std::uint64_t seed = o.seed.value_or(0);
    SyntheticSceneSpec spec;
    if (o.preset == "moving_square") spec = SyntheticSceneSpec::moving_square(seed);
    else if (o.preset == "camouflage") spec = SyntheticSceneSpec::camouflage(seed, o.canvas.value_or(32));
    else throw ConfigError("--preset must be moving_square or camouflage");
    if (o.frames) spec.frames = *o.frames;
    if (o.canvas && o.preset == "moving_square") spec.canvas = *o.canvas;
    spec.validate();
    const fs::path dir = require_out(o);
    const auto frames = synth_sequence(spec);
    write_sequence(dir, frames);
    out << "wrote " << frames.size() << " frames to " << dir.string() << '\n';
    return kExitOk;
}

int cmd_pca(const Options& o, std::ostream& out) {
    const fs::path dir = require_out(o);
    for (const auto& s : load_all(o)) {
        const auto model = pca_fit(images(split_frames(s.frames).train), o.k);
        fs::create_directories(dir / s.name);
        for (const auto& f : s.frames) write_rgb((dir / s.name / numbered("bg", f.frame_index)).string(), pca_background(model, f.image));
        out << s.name << ": k=" << o.k << ", explained variance " << model.explained_variance(o.k) << '\n';
    }
    return kExitOk;
}

int cmd_rpca(const Options& o, std::ostream& out) {
    const fs::path dir = require_out(o);
    for (const auto& s : load_all(o)) {
        RpcaState state(s.frames.at(0).image.shape(), o.rank, o.sparse_threshold);
        fs::create_directories(dir / s.name);
        for (const auto& f : s.frames) {
            const RpcaOutput r = rpca_update(state, f.image);
            write_rgb((dir / s.name / numbered("bg", f.frame_index)).string(), r.low_rank);
            Mask m(f.height(), f.width());
            const std::size_t plane = m.values.size();
            for (std::size_t i = 0; i < r.sparse.size(); ++i)
                if (r.sparse[i] != 0) m.values[i % plane] = 1;
            write_mask((dir / s.name / numbered("mask", f.frame_index)).string(), m);
        }
        out << s.name << ": " << state.frames_seen << " frames, rank " << state.basis.cols() << '\n';
    }
    return kExitOk;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Joint background reconstruction and foreground segmentation", "bgfg"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();
    Options o;

    auto common_data = [&](CLI::App* c) {
        c->add_option("--data", o.data, "Sequence directories (CDNet layout)");
        c->add_flag("--lenient", o.lenient, "Treat unknown ground-truth values as ignored");
    };
    auto common_config = [&](CLI::App* c) {
        c->add_option("--config", o.config, "key = value configuration file");
        c->add_option("--profile", o.profile, "desk or paper");
        c->add_option("--seed", o.seed, "Random seed");
        c->add_option("--set", o.sets, "Override a configuration key (key=value)");
    };

    auto* train = app.add_subcommand("train", "Run the three-step training schedule");
    common_config(train);
    common_data(train);
    train->add_option("--out", o.out, "Run directory");

    auto* infer = app.add_subcommand("infer", "Write background and mask images");
    auto* reconstruct = app.add_subcommand("reconstruct", "Write reconstructed backgrounds");
    for (auto* c : {infer, reconstruct}) {
        common_data(c);
        c->add_option("--checkpoint", o.checkpoint, "Model checkpoint");
        c->add_option("--out", o.out, "Output directory");
        c->add_option("--split", o.split, "all, train or test")->check(CLI::IsMember({"all", "train", "test"}));
    }
    infer->add_option("--threshold", o.threshold, "Foreground probability threshold (default argmax)");

    auto* eval = app.add_subcommand("eval", "F-measure reports");
    common_data(eval);
    eval->add_option("--masks", o.masks, "Directory with <sequence>/mask%06d.png");
    eval->add_option("--checkpoint", o.checkpoint, "Predict masks with this model instead");
    eval->add_option("--threshold", o.threshold, "Foreground probability threshold (default argmax)");
    eval->add_option("--split", o.split, "all, train or test")->check(CLI::IsMember({"all", "train", "test"}));
    eval->add_option("--out", o.out, "Directory for report.csv and report.txt");

    auto* sweep = app.add_subcommand("sweep", "F-measure over the threshold grid");
    common_config(sweep);
    common_data(sweep);
    sweep->add_option("--method", o.method, "pca, rpca or baseline1")->required();
    sweep->add_option("--checkpoint", o.checkpoint, "Stage-1 model for baseline1 (trained when absent)");
    sweep->add_option("--out", o.out, "Output directory");
    sweep->add_option("--k", o.k, "PCA components");
    sweep->add_option("--rank", o.rank, "RPCA rank");
    sweep->add_option("--sparse-threshold", o.sparse_threshold, "RPCA soft threshold");

    auto* synth = app.add_subcommand("synth", "Write a synthetic sequence in CDNet layout");
    synth->add_option("--preset", o.preset, "moving_square or camouflage");
    synth->add_option("--seed", o.seed, "Random seed");
    synth->add_option("--frames", o.frames, "Frame count");
    synth->add_option("--canvas", o.canvas, "Canvas size");
    synth->add_option("--out", o.out, "Sequence directory");

    auto* pca = app.add_subcommand("pca", "PCA background per sequence");
    common_data(pca);
    pca->add_option("--k", o.k, "Components");
    pca->add_option("--out", o.out, "Output directory");

    auto* rpca = app.add_subcommand("rpca", "Streaming low-rank plus sparse decomposition");
    common_data(rpca);
    rpca->add_option("--rank", o.rank, "Subspace rank");
    rpca->add_option("--sparse-threshold", o.sparse_threshold, "Soft threshold");
    rpca->add_option("--out", o.out, "Output directory");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "bgfg: usage error: " << e.what() << '\n';
        return kExitUsage;
    }

    CLI::App* cmd = app.get_subcommands().front();
    try {
        err << "# command " << cmd->get_name() << '\n' << cmd->config_to_str(true, false);
        const std::string name = cmd->get_name();
        if (name == "train") return cmd_train(o, out, err);
        if (name == "infer") return cmd_infer(o, out, true);
        if (name == "reconstruct") return cmd_infer(o, out, false);
        if (name == "eval") return cmd_eval(o, out);
        if (name == "sweep") return cmd_sweep(o, out, err);
        if (name == "synth") return cmd_synth(o, out);
        if (name == "pca") return cmd_pca(o, out);
        return cmd_rpca(o, out);
    } catch (const ConfigError& e) {
        err << "bgfg: usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const NumericalError& e) {
        err << "bgfg: numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const Error& e) {
        err << "bgfg: data error: " << e.what() << '\n';
        return kExitData;
    } catch (const fs::filesystem_error& e) {
        err << "bgfg: data error: " << e.what() << '\n';
        return kExitData;
    }
}

int run_command(int argc, const char* const* argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run_command(args, std::cout, std::cerr);
}

}  // namespace bgfg

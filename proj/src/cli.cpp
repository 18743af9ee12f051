#include "larp/cli.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "larp/data_io.hpp"
#include "larp/lrpe.hpp"
#include "larp/model_file.hpp"
#include "larp/training.hpp"

namespace larp::cli {
namespace {

std::string percent(double value) {
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "%.2f", value);
    return buffer;
}

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
    try {
        return fn();
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        ModelConfig config = load_config(args.config);
        if (args.seed) config.seed = *args.seed;
        LabeledDataset data = load_idx_dataset(args.train_images, args.train_labels);
        data.validate(config.num_classes);
        if (args.subsample != 0 && args.subsample < data.size()) {
            data = stratified_subsample(data, args.subsample, config.seed);
        }
        const Model initial = build_model(config);

        std::ofstream log_file;
        std::ostream* log = &out;
        if (!args.log.empty()) {
            log_file.open(args.log, std::ios::trunc);
            if (!log_file) throw InputError("cannot write file: " + args.log);
            log = &log_file;
        }
        ScgConfig scg;
        scg.max_iters = args.max_iters;
        scg.log = log;
        const TrainResult result = scg_train(initial, data, scg, args.threads);
        save_model(args.out, result.model);

        const Evaluation train_eval = evaluate(result.model, data, args.threads);
        out << "final_loss=" << format_real(result.scg.loss) << '\n'
            << "train_error=" << percent(train_eval.error_rate) << '\n'
            << "iterations=" << result.scg.iterations << '\n'
            << "stop=" << to_string(result.scg.stop) << '\n';
        return 0;
    });
}

int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const Model model = load_model(args.model);
        const LabeledDataset data = load_idx_dataset(args.images, args.labels);
        const Evaluation eval = evaluate(model, data, args.threads);
        out << "error_rate=" << percent(eval.error_rate) << '\n';
        return 0;
    });
}

int cmd_extract(const ExtractArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const Model model = load_model(args.model);
        const std::vector<FeatureMap> images = load_idx_images(args.images);
        std::ofstream file(args.out, std::ios::binary | std::ios::trunc);
        if (!file) throw InputError("cannot write file: " + args.out);
        for (const FeatureMap& image : images) {
            const std::vector<double> features = extract_features(model, image);
            for (std::size_t f = 0; f < features.size(); ++f) {
                if (f != 0) file << '\t';
                file << format_real(features[f]);
            }
            file << '\n';
        }
        if (!file) throw InputError("failed writing " + args.out);
        out << "images=" << images.size() << '\n'
            << "features=" << model.feature_dim() << '\n';
        return 0;
    });
}

int cmd_verify(const VerifyOptions& options, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        if (options.trials == 0) {
            err << "warning: 0 trials requested; nothing was verified\n";
            return 0;
        }
        bool all_passed = true;
        for (const OracleReport& report : run_verification(options)) {
            out << report.name << ": max_error=" << report.max_error
                << " tolerance=" << report.tolerance << " checks=" << report.checks;
            if (report.skipped != 0) out << " skipped=" << report.skipped;
            out << (report.passed ? " PASS" : " FAIL") << '\n';
            all_passed = all_passed && report.passed;
        }
        return all_passed ? 0 : 1;
    });
}

int cmd_bench(const BenchArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        if (args.repeat == 0) throw InputError("bench: --repeat must be positive");
        Rng rng(mix64(args.support));
        FeatureMap map(args.height, args.width);
        for (double& v : map.values()) v = rng.uniform();
        const ProjectionKernel kernel = sample_kernel({0.0, 0.0}, args.support, rng);

        volatile double sink = project(map, kernel).values()[0];  // warm-up
        const auto start = std::chrono::steady_clock::now();
        for (std::size_t r = 0; r < args.repeat; ++r) sink = project(map, kernel).values()[0];
        const auto elapsed = std::chrono::steady_clock::now() - start;
        const auto ns = std::chrono::duration_cast<std::chrono::nanoseconds>(elapsed).count();
        out << "ns_per_projection=" << ns / static_cast<long long>(args.repeat) << '\n';
        (void)sink;
        return 0;
    });
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Layered random projection classifier"};
    app.require_subcommand(1);

    TrainArgs train;
    std::uint64_t train_seed = 0;
    auto* train_cmd = app.add_subcommand("train", "Train a model with scaled conjugate gradient");
    train_cmd->add_option("--config", train.config, "Architecture config (JSON)")->required();
    train_cmd->add_option("--train-images", train.train_images, "IDX image file")->required();
    train_cmd->add_option("--train-labels", train.train_labels, "IDX label file")->required();
    train_cmd->add_option("--subsample", train.subsample, "Stratified training subset size");
    train_cmd->add_option("--max-iters", train.max_iters, "SCG iteration limit");
    auto* seed_opt = train_cmd->add_option("--seed", train_seed, "Override the config seed");
    train_cmd->add_option("--out", train.out, "Model file to write")->required();
    train_cmd->add_option("--log", train.log, "Write the loss history here instead of stdout");
    train_cmd->add_option("--threads", train.threads, "Worker threads (0 = all cores)");

    EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "Report the classification error of a model");
    eval_cmd->add_option("--model", eval.model)->required();
    eval_cmd->add_option("--images", eval.images)->required();
    eval_cmd->add_option("--labels", eval.labels)->required();
    eval_cmd->add_option("--threads", eval.threads);

    ExtractArgs extract;
    auto* extract_cmd = app.add_subcommand("extract", "Write pooled random features, one row per image");
    extract_cmd->add_option("--model", extract.model)->required();
    extract_cmd->add_option("--images", extract.images)->required();
    extract_cmd->add_option("--out", extract.out)->required();

    VerifyOptions verify;
    auto* verify_cmd = app.add_subcommand("verify", "Check operators against slow oracles");
    verify_cmd->add_option("--trials", verify.trials);
    verify_cmd->add_option("--seed", verify.seed);

    BenchArgs bench;
    std::vector<std::size_t> map_size;
    auto* bench_cmd = app.add_subcommand("bench", "Time a single projection");
    bench_cmd->add_option("--map-size", map_size, "Height and width")->expected(2);
    bench_cmd->add_option("--support", bench.support);
    bench_cmd->add_option("--repeat", bench.repeat);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }

    if (*train_cmd) {
        if (*seed_opt) train.seed = train_seed;
        return cmd_train(train, out, err);
    }
    if (*eval_cmd) return cmd_eval(eval, out, err);
    if (*extract_cmd) return cmd_extract(extract, out, err);
    if (*verify_cmd) return cmd_verify(verify, out, err);
    if (*bench_cmd) {
        if (map_size.size() == 2) {
            bench.height = map_size[0];
            bench.width = map_size[1];
        }
        return cmd_bench(bench, out, err);
    }
    return 1;
}

}  // namespace larp::cli

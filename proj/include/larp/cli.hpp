#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "larp/verify.hpp"

namespace larp::cli {

struct TrainArgs {
    std::string config;
    std::string train_images;
    std::string train_labels;
    std::size_t subsample = 0;  // 0 keeps the full set
    std::size_t max_iters = 200;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string log;  // loss history destination; empty means `out` stream
    std::size_t threads = 0;
};

struct EvalArgs {
    std::string model;
    std::string images;
    std::string labels;
    std::size_t threads = 0;
};

struct ExtractArgs {
    std::string model;
    std::string images;
    std::string out;
};

struct BenchArgs {
    std::size_t height = 64;
    std::size_t width = 64;
    std::size_t support = 25;
    std::size_t repeat = 100;
};

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err);
int cmd_extract(const ExtractArgs& args, std::ostream& out, std::ostream& err);
int cmd_verify(const VerifyOptions& options, std::ostream& out, std::ostream& err);
int cmd_bench(const BenchArgs& args, std::ostream& out, std::ostream& err);

/// Parses `larp <command> [flags]` and dispatches. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace larp::cli

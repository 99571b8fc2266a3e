#include "cli.hpp"

#include "microast/error.hpp"
#include "microast/image.hpp"
#include "microast/network.hpp"
#include "microast/parallel.hpp"
#include "microast/weights_io.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <iomanip>
#include <optional>
#include <random>
#include <regex>

namespace microast::cli {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
    return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct StylizeArgs {
    std::string content;
    std::string style;
    std::string weights;
    std::string output;
    int threads = 0;
    bool seed_neutral = false;
    std::uint64_t seed = 0;
};

struct BenchmarkArgs {
    std::string size;
    int runs = 3;
    std::string weights;
    int threads = 0;
    bool seed_neutral = false;
    std::uint64_t seed = 0;
};

struct InitArgs {
    std::uint64_t seed = 0;
    std::string output;
    bool neutral = false;
};

struct InspectArgs {
    std::string path;
};

void apply_threads(int requested) {
    int threads = requested;
    if (threads <= 0) {
        if (const char* env = std::getenv("MICROAST_THREADS")) {
            try {
                threads = std::stoi(env);
            } catch (const std::exception&) {
                throw UsageError(std::string("MICROAST_THREADS is not an integer: ") + env);
            }
            if (threads <= 0) throw UsageError("MICROAST_THREADS must be positive");
        }
    }
    set_thread_count(threads > 0 ? threads : 0);
}

NetworkWeights resolve_weights(const std::string& path, bool seed_neutral, std::uint64_t seed) {
    if (seed_neutral) return init_weights(seed, true);
    if (path.empty()) throw UsageError("--weights is required (or pass --seed-neutral)");
    return load_weights(path);
}

std::pair<std::size_t, std::size_t> parse_size(const std::string& text) {
    static const std::regex pattern(R"((\d+)[xX](\d+))");
    std::smatch m;
    if (!std::regex_match(text, m, pattern)) throw UsageError("--size must look like WIDTHxHEIGHT, got '" + text + "'");
    return {std::stoul(m[1].str()), std::stoul(m[2].str())};
}

// Smooth colour ramps with mild noise; deterministic for a given seed.
TensorF32 synthetic_image(std::size_t width, std::size_t height, std::uint64_t seed) {
    TensorF32 t(Shape{1, 3, height, width});
    std::mt19937_64 rng(seed);
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t y = 0; y < height; ++y) {
            for (std::size_t x = 0; x < width; ++x) {
                const float ramp = 0.5f + 0.5f * std::sin(0.013f * static_cast<float>(x * (c + 1)) +
                                                          0.021f * static_cast<float>(y * (3 - c)));
                const float noise = static_cast<float>(rng() >> 40) * 0x1.0p-24f;
                t.at(0, c, y, x) = 0.85f * ramp + 0.15f * noise;
            }
        }
    }
    return t;
}

int cmd_stylize(const StylizeArgs& a, std::ostream& out) {
    apply_threads(a.threads);
    auto t0 = Clock::now();
    const NetworkWeights weights = resolve_weights(a.weights, a.seed_neutral, a.seed);
    const TensorF32 content = to_tensor(load_image(a.content));
    const TensorF32 style = to_tensor(load_image(a.style));
    const double load_ms = elapsed_ms(t0);

    t0 = Clock::now();
    const TensorF32 result = stylize(content, style, weights);
    const double forward_ms = elapsed_ms(t0);

    t0 = Clock::now();
    save_image(from_tensor(result), a.output);
    const double save_ms = elapsed_ms(t0);

    out << std::fixed << std::setprecision(1) << "output " << result.w() << "x" << result.h() << " -> " << a.output
        << "\nload_ms " << load_ms << "\nforward_ms " << forward_ms << "\nsave_ms " << save_ms << "\nthreads "
        << thread_count() << "\n";
    return kOk;
}

int cmd_benchmark(const BenchmarkArgs& a, std::ostream& out) {
    if (a.runs < 1) throw UsageError("--runs must be at least 1");
    apply_threads(a.threads);
    const auto [width, height] = parse_size(a.size);
    const NetworkWeights weights = resolve_weights(a.weights, a.seed_neutral, a.seed);
    const TensorF32 content = synthetic_image(width, height, 1);
    const TensorF32 style = synthetic_image(width, height, 2);

    const double gflops = estimate_flops(height, width, weights.plan()) / 1e9;
    std::vector<double> times;
    out << std::fixed << std::setprecision(2);
    out << "size " << width << "x" << height << " threads " << thread_count() << "\n";
    for (int r = 0; r < a.runs; ++r) {
        const auto t0 = Clock::now();
        const TensorF32 result = stylize(content, style, weights);
        times.push_back(elapsed_ms(t0));
        out << "run " << r + 1 << " forward_ms " << times.back() << "\n";
    }
    std::vector<double> sorted = times;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t mid = sorted.size() / 2;
    const double median = sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
    const double megapixels = static_cast<double>(width * height) / 1e6;
    out << "median_ms " << median << "\n";
    out << "megapixels_per_s " << megapixels / (median / 1e3) << "\n";
    out << "gflops " << std::setprecision(3) << gflops << "\n";
    out << "gflops_per_s " << gflops / (median / 1e3) << "\n";
    return kOk;
}

int cmd_init(const InitArgs& a, std::ostream& out) {
    const NetworkWeights weights = init_weights(a.seed, a.neutral);
    save_weights(weights, a.output);
    out << "wrote " << a.output << " (" << weights.tensors().size() << " tensors, " << count_params(weights)
        << " parameters)\n";
    return kOk;
}

int cmd_inspect(const InspectArgs& a, std::ostream& out) {
    const std::vector<std::uint8_t> bytes = read_file(a.path);
    const ContainerInfo info = read_container_info(bytes);
    const NetworkWeights weights = deserialize_weights(bytes);
    out << "version " << info.version << "\n";
    out << "plan stem=" << info.plan.stem << " mid=" << info.plan.mid << " bottleneck=" << info.plan.bottleneck
        << " kernel=" << info.plan.kernel << " modulated_convs=" << info.plan.modulated_convs << "\n";
    out << "crc32 " << std::hex << std::setw(8) << std::setfill('0') << info.crc << std::dec << std::setfill(' ')
        << "\n";
    for (const auto& m : info.manifest) {
        out << m.name << " " << m.dtype << " [";
        for (std::size_t i = 0; i < m.shape.size(); ++i) out << (i ? "," : "") << m.shape[i];
        out << "] offset=" << m.offset << " nbytes=" << m.nbytes << "\n";
    }
    out << "tensors " << info.manifest.size() << "\n";
    out << "total_params " << count_params(weights) << "\n";
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Arbitrary style transfer engine", "microast"};
    app.require_subcommand(1);

    StylizeArgs stylize_args;
    auto* sty = app.add_subcommand("stylize", "Stylize a content image with a style image");
    sty->add_option("--content", stylize_args.content, "Content image (PNG or JPEG)")->required();
    sty->add_option("--style", stylize_args.style, "Style image (PNG or JPEG)")->required();
    sty->add_option("--weights", stylize_args.weights, "Weight container (.mast)");
    sty->add_option("--output", stylize_args.output, "Output PNG")->required();
    sty->add_option("--threads", stylize_args.threads, "Worker threads (default: MICROAST_THREADS or all cores)");
    sty->add_flag("--seed-neutral", stylize_args.seed_neutral, "Use seeded neutral-signal test weights");
    sty->add_option("--seed", stylize_args.seed, "Seed for --seed-neutral weights");

    BenchmarkArgs bench_args;
    auto* bench = app.add_subcommand("benchmark", "Time the forward pass on synthetic inputs");
    bench->add_option("--size", bench_args.size, "WIDTHxHEIGHT")->required();
    bench->add_option("--runs", bench_args.runs, "Timed runs");
    bench->add_option("--weights", bench_args.weights, "Weight container (.mast)");
    bench->add_option("--threads", bench_args.threads, "Worker threads");
    bench->add_flag("--seed-neutral", bench_args.seed_neutral, "Use seeded neutral-signal test weights");
    bench->add_option("--seed", bench_args.seed, "Seed for --seed-neutral weights");

    InitArgs init_args;
    auto* init = app.add_subcommand("init-weights", "Write seeded weights to a .mast container");
    init->alias("init");
    init->add_option("--seed", init_args.seed, "Seed");
    init->add_option("--output", init_args.output, "Output path")->required();
    init->add_flag("--neutral", init_args.neutral, "Neutral-signal weights (filter signals exactly (1, 0))");

    InspectArgs inspect_args;
    auto* inspect = app.add_subcommand("inspect", "Validate a .mast container and print its manifest");
    inspect->add_option("path", inspect_args.path, "Container path")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help("", CLI::AppFormatMode::All);
        return kUsage;
    }

    try {
        if (sty->parsed()) return cmd_stylize(stylize_args, out);
        if (bench->parsed()) return cmd_benchmark(bench_args, out);
        if (init->parsed()) return cmd_init(init_args, out);
        if (inspect->parsed()) return cmd_inspect(inspect_args, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n\n" << app.help("", CLI::AppFormatMode::All);
        return kUsage;
    } catch (const IoError& e) {
        err << "io error: " << e.what() << "\n";
        return kIo;
    } catch (const IntegrityError& e) {
        err << "integrity error: " << e.what() << "\n";
        return kSchema;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kSchema;
    }
    return kUsage;
}

}  // namespace microast::cli

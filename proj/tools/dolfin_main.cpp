#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include "dolfin/checkpoint.hpp"
#include "dolfin/config.hpp"
#include "dolfin/federated.hpp"
#include "dolfin/linalg.hpp"
#include "dolfin/report.hpp"
#include "dolfin/rng.hpp"

namespace {

using namespace dolfin;
namespace la = linalg;

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << text;
    if (!out) throw DataError("short write: " + path);
}

int resolve_threads(int flag_value) {
    if (flag_value > 0) return flag_value;
    if (const char* env = std::getenv("DOLFIN_THREADS")) {
        int v = std::atoi(env);
        if (v > 0) return v;
    }
    return 1;
}

int cmd_run(const std::string& config_path, const std::string& report_path,
            const std::string& csv_path, int threads) {
    ExperimentConfig cfg = parse_config_file(config_path);
    cfg.threads = resolve_threads(threads);
    ExperimentResult result = run_experiment(cfg);
    write_file(report_path, render_report(result));
    write_file(csv_path, result.accuracy.to_csv());
    std::printf("final_average_accuracy = %.17g\n", result.final_average_accuracy);
    std::printf("wall_clock_seconds = %.3f\n", result.wall_clock_seconds);
    std::printf("report: %s\naccuracy csv: %s\n", report_path.c_str(), csv_path.c_str());
    return 0;
}

int cmd_partition(const std::string& config_path) {
    ExperimentConfig cfg = parse_config_file(config_path);
    if (cfg.data_kind != "synthetic") {
        throw ConfigError("partition preview supports synthetic data only");
    }
    Dataset dataset = generate_synthetic(cfg.data);
    TaskSchedule schedule = build_schedule(dataset, cfg.num_tasks, derive_seed(cfg.seed, 0x5c4e));
    PartitionPlan plan = build_partition(dataset, schedule, cfg.round.num_clients, cfg.beta, cfg.seed);
    std::cout << render_partition_histogram(plan, dataset, schedule);
    return 0;
}

int cmd_eval(const std::string& csv_path) {
    std::ifstream in(csv_path, std::ios::binary);
    if (!in) throw DataError("cannot open accuracy csv: " + csv_path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    AccuracyMatrix m = AccuracyMatrix::from_csv(text);
    std::printf("%.17g\n", faa(m));
    return 0;
}

// Central finite differences of the training loss against the analytic
// gradients, over every trainable entry.
double max_gradcheck_error(int dim, int layers, int rank, int tokens, int classes,
                           std::uint64_t seed) {
    BackboneConfig bc;
    bc.embed_dim = dim;
    bc.num_layers = layers;
    bc.num_tokens = tokens;
    bc.input_dim = 4 * (tokens - 1);
    bc.validate();

    SplitMix64 rng(derive_seed(seed, 0x9c4d));
    auto backbone = std::make_shared<Backbone>(init_backbone(bc, derive_seed(seed, 0xb0)));
    ModelState model = make_model(backbone);
    std::vector<std::pair<DenseMatrix, DenseMatrix>> bases;
    for (int l = 0; l < layers; ++l) {
        DenseMatrix ga(dim, rank), gv(dim, rank);
        for (double& v : ga.data()) v = rng.gaussian();
        for (double& v : gv.data()) v = rng.gaussian();
        bases.emplace_back(la::qr_orthonormalize(ga), la::qr_orthonormalize(gv));
    }
    model = begin_task(model, bases, classes);
    for (auto& ad : model.adapters) {
        for (double& v : ad.key.b.data()) v = 0.1 * rng.gaussian();
        for (double& v : ad.value.b.data()) v = 0.1 * rng.gaussian();
    }
    for (double& v : model.head.data()) v = 0.1 * rng.gaussian();

    const int batch = 4;
    DenseMatrix x(batch, bc.input_dim);
    for (double& v : x.data()) v = rng.gaussian();
    std::vector<int> labels;
    for (int i = 0; i < batch; ++i) labels.push_back(static_cast<int>(rng.below((std::uint64_t)classes)));

    GradientSet grads = loss_and_grads(model, x, labels, 0, classes);
    const double step = 1e-5;
    double worst = 0.0;
    auto check_entry = [&](double* p, double analytic) {
        double saved = *p;
        *p = saved + step;
        double hi = loss_and_grads(model, x, labels, 0, classes).loss;
        *p = saved - step;
        double lo = loss_and_grads(model, x, labels, 0, classes).loss;
        *p = saved;
        double numeric = (hi - lo) / (2.0 * step);
        double rel = std::fabs(numeric - analytic) /
                     std::max({std::fabs(numeric), std::fabs(analytic), 1e-8});
        if (rel > worst) worst = rel;
    };
    for (int l = 0; l < layers; ++l) {
        auto& ad = model.adapters[static_cast<std::size_t>(l)];
        for (std::size_t i = 0; i < ad.key.b.data().size(); ++i)
            check_entry(&ad.key.b.data()[i], grads.db_k[static_cast<std::size_t>(l)].data()[i]);
        for (std::size_t i = 0; i < ad.value.b.data().size(); ++i)
            check_entry(&ad.value.b.data()[i], grads.db_v[static_cast<std::size_t>(l)].data()[i]);
    }
    for (std::size_t i = 0; i < model.head.data().size(); ++i)
        check_entry(&model.head.data()[i], grads.d_head.data()[i]);
    return worst;
}

int cmd_gradcheck(int dim, int layers, int rank, int tokens, int classes, std::uint64_t seed) {
    double worst = max_gradcheck_error(dim, layers, rank, tokens, classes, seed);
    std::printf("max_relative_error = %.17g\n", worst);
    if (!(worst <= 1e-4)) {
        std::fprintf(stderr, "gradient check failed: %.17g > 1e-4\n", worst);
        return 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"federated class-incremental trainer with orthogonal low-rank adapters"};
    app.require_subcommand(1);

    std::string config_path, report_path = "report.txt", csv_path = "accuracy.csv";
    int threads = 0;
    auto* run = app.add_subcommand("run", "run an experiment from a config file");
    run->add_option("--config", config_path, "config file")->required();
    run->add_option("--report", report_path, "report output path");
    run->add_option("--csv", csv_path, "accuracy matrix CSV output path");
    run->add_option("--threads", threads, "worker thread cap (env DOLFIN_THREADS as fallback)");

    std::string part_config;
    auto* partition = app.add_subcommand("partition", "print per-client class histograms");
    partition->add_option("--config", part_config, "config file")->required();

    std::string eval_csv;
    auto* eval = app.add_subcommand("eval", "recompute final average accuracy from a CSV");
    eval->add_option("--csv", eval_csv, "accuracy matrix CSV")->required();

    int gc_dim = 16, gc_layers = 2, gc_rank = 2, gc_tokens = 4, gc_classes = 3;
    std::uint64_t gc_seed = 1;
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    gradcheck->add_option("--dim", gc_dim, "embedding dimension");
    gradcheck->add_option("--layers", gc_layers, "attention layers");
    gradcheck->add_option("--rank", gc_rank, "adapter rank");
    gradcheck->add_option("--tokens", gc_tokens, "tokens per sample (incl. class token)");
    gradcheck->add_option("--classes", gc_classes, "active classes");
    gradcheck->add_option("--seed", gc_seed, "seed");

    auto* version = app.add_subcommand("version", "print the version tag");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (*run) return cmd_run(config_path, report_path, csv_path, threads);
        if (*partition) return cmd_partition(part_config);
        if (*eval) return cmd_eval(eval_csv);
        if (*gradcheck)
            return cmd_gradcheck(gc_dim, gc_layers, gc_rank, gc_tokens, gc_classes, gc_seed);
        if (*version) {
            std::printf("%s\n", kVersionTag);
            return 0;
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const ParseError& e) {
        std::fprintf(stderr, "parse error at offset %lld: %s\n", e.offset, e.what());
        return 1;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}

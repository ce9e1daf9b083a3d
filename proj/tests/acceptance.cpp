// Acceptance suite: one PASS/FAIL line per criterion, exit 0 only if all pass.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "dolfin/checkpoint.hpp"
#include "dolfin/config.hpp"
#include "dolfin/federated.hpp"
#include "dolfin/linalg.hpp"
#include "dolfin/report.hpp"
#include "dolfin/rng.hpp"

using namespace dolfin;
namespace la = linalg;

namespace {

// Seed-derivation tags mirrored from the experiment runner; the centralized
// oracle below must walk the exact same random streams.
constexpr std::uint64_t kTagTrain = 0x10ca;
constexpr std::uint64_t kTagCapture = 0xcafe;
constexpr std::uint64_t kTagRepair = 0x4e9a;
constexpr std::uint64_t kTagBackbone = 0xbb01;
constexpr std::uint64_t kTagSchedule = 0x5c4e;

int g_failures = 0;

void report(int n, const char* name, bool pass, const std::string& detail) {
    std::printf("criterion %2d (%s): %s%s%s\n", n, name, pass ? "PASS" : "FAIL",
                detail.empty() ? "" : " — ", detail.c_str());
    if (!pass) ++g_failures;
}

DenseMatrix random_matrix(int rows, int cols, std::uint64_t seed) {
    SplitMix64 rng(seed);
    DenseMatrix m(rows, cols);
    for (double& v : m.data()) v = rng.gaussian();
    return m;
}

DenseMatrix random_orthonormal(int rows, int cols, std::uint64_t seed) {
    return la::qr_orthonormalize(random_matrix(rows, cols, seed));
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

// ---------------------------------------------------------------- criterion 1

void criterion_gradients() {
    auto t0 = std::chrono::steady_clock::now();
    const int d = 16, layers = 2, tokens = 4, rank = 2, classes = 3;
    BackboneConfig bc;
    bc.embed_dim = d;
    bc.num_layers = layers;
    bc.num_tokens = tokens;
    bc.input_dim = 4 * (tokens - 1);

    SplitMix64 rng(91);
    auto backbone = std::make_shared<Backbone>(init_backbone(bc, 17));
    ModelState model = make_model(backbone);
    std::vector<std::pair<DenseMatrix, DenseMatrix>> bases;
    for (int l = 0; l < layers; ++l)
        bases.emplace_back(random_orthonormal(d, rank, 100 + (std::uint64_t)l),
                           random_orthonormal(d, rank, 200 + (std::uint64_t)l));
    model = begin_task(model, bases, classes);
    for (auto& ad : model.adapters) {
        for (double& v : ad.key.b.data()) v = 0.1 * rng.gaussian();
        for (double& v : ad.value.b.data()) v = 0.1 * rng.gaussian();
    }
    for (double& v : model.head.data()) v = 0.1 * rng.gaussian();

    DenseMatrix x(4, bc.input_dim);
    for (double& v : x.data()) v = rng.gaussian();
    std::vector<int> labels = {0, 2, 1, 2};

    GradientSet grads = loss_and_grads(model, x, labels, 0, classes);
    const double step = 1e-5;  // central-difference step
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
        worst = std::max(worst, rel);
    };
    for (int l = 0; l < layers; ++l) {
        auto& ad = model.adapters[(std::size_t)l];
        for (std::size_t i = 0; i < ad.key.b.data().size(); ++i)
            check_entry(&ad.key.b.data()[i], grads.db_k[(std::size_t)l].data()[i]);
        for (std::size_t i = 0; i < ad.value.b.data().size(); ++i)
            check_entry(&ad.value.b.data()[i], grads.db_v[(std::size_t)l].data()[i]);
    }
    for (std::size_t i = 0; i < model.head.data().size(); ++i)
        check_entry(&model.head.data()[i], grads.d_head.data()[i]);

    double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report(1, "gradient exactness", worst <= 1e-4 && seconds < 30.0,
           "max rel err " + fmt(worst) + ", " + fmt(seconds) + "s");
}

// ---------------------------------------------------------------- criterion 2

void criterion_merge_equivalence() {
    const int d = 16, layers = 2, rank = 2, classes = 2, tasks = 3;
    BackboneConfig bc;
    bc.embed_dim = d;
    bc.num_layers = layers;
    bc.num_tokens = 4;
    bc.input_dim = 12;
    auto backbone = std::make_shared<Backbone>(init_backbone(bc, 23));
    ModelState model = make_model(backbone);
    SplitMix64 rng(5);
    double worst = 0.0;
    for (int t = 0; t < tasks; ++t) {
        std::vector<std::pair<DenseMatrix, DenseMatrix>> bases;
        for (int l = 0; l < layers; ++l)
            bases.emplace_back(
                random_orthonormal(d, rank, 1000 + (std::uint64_t)(t * layers + l)),
                random_orthonormal(d, rank, 2000 + (std::uint64_t)(t * layers + l)));
        model = begin_task(model, bases, classes);
        for (auto& ad : model.adapters) {
            for (double& v : ad.key.b.data()) v = 0.3 * rng.gaussian();
            for (double& v : ad.value.b.data()) v = 0.3 * rng.gaussian();
        }
        DenseMatrix x(100, bc.input_dim);
        for (double& v : x.data()) v = rng.gaussian();
        DenseMatrix pre = forward(model, x);
        model = merge_current_task(model);
        DenseMatrix post = forward(model, x);
        for (std::size_t i = 0; i < pre.data().size(); ++i)
            worst = std::max(worst, std::fabs(pre.data()[i] - post.data()[i]));
    }
    report(2, "merge equivalence", worst <= 1e-10, "max logit diff " + fmt(worst));
}

// ---------------------------------------------------------------- criterion 3

void criterion_orthogonality() {
    ExperimentConfig cfg;
    cfg.backbone.embed_dim = 16;
    cfg.backbone.num_layers = 2;
    cfg.backbone.num_tokens = 3;
    cfg.backbone.input_dim = 8;
    cfg.data.num_classes = 4;
    cfg.data.samples_per_class = 24;
    cfg.data.input_dim = 8;
    cfg.data.seed = 3;
    cfg.num_tasks = 2;
    cfg.rank = 2;
    cfg.round.num_clients = 2;
    cfg.round.local_epochs = 2;
    cfg.round.batch_size = 8;
    cfg.memory.energy_threshold = 0.5;
    cfg.memory.activation_cap = 64;
    cfg.seed = 29;

    Dataset dataset = generate_synthetic(cfg.data);
    TaskSchedule schedule = build_schedule(dataset, cfg.num_tasks, 7);
    PartitionPlan plan = build_partition(dataset, schedule, 2, 0.5, 13);
    auto backbone = std::make_shared<Backbone>(init_backbone(cfg.backbone, 31));
    const int d = cfg.backbone.embed_dim, r = cfg.rank, L = cfg.backbone.num_layers;

    ModelState global = make_model(backbone);
    std::vector<ClientState> clients(2);
    for (int k = 0; k < 2; ++k) {
        clients[(std::size_t)k].client_id = k;
        clients[(std::size_t)k].sink = CaptureSink(L, d, 64, (std::uint64_t)(50 + k));
        for (int l = 0; l < L; ++l)
            clients[(std::size_t)k].memories.push_back({memory_init(d), memory_init(d)});
    }
    std::vector<std::pair<DenseMatrix, DenseMatrix>> bases;
    for (int l = 0; l < L; ++l)
        bases.emplace_back(random_orthonormal(d, r, 70 + (std::uint64_t)l),
                           random_orthonormal(d, r, 80 + (std::uint64_t)l));
    global = begin_task(global, bases, 2);

    MemoryConfig mc = cfg.memory;
    mc.rank = r;
    SplitMix64 crng(1234);
    double worst_ma = 0.0, worst_ortho = 0.0, worst_dot = 0.0;
    bool exercised = false;
    for (int t = 0; t < 2; ++t) {
        for (auto& client : clients) {
            ClientState fresh = client;
            fresh.replica = global;
            fresh.has_replica = true;
            const auto& shard = plan.assignments[(std::size_t)t][(std::size_t)client.client_id];
            local_train(fresh, dataset, shard, schedule, cfg, t, 0);
            client = fresh;
            AdapterCandidates cand = client_next_a(client, mc, r, false);
            for (int l = 0; l < L; ++l) {
                for (int pr = 0; pr < 2; ++pr) {
                    const DenseMatrix& a = cand[(std::size_t)l][(std::size_t)pr];
                    const SubspaceMemory& mem =
                        client.memories[(std::size_t)l][(std::size_t)pr];
                    DenseMatrix m = effective_gradient_basis(mem);
                    exercised = true;
                    worst_ortho = std::max(
                        worst_ortho,
                        (la::matmul(a.transpose(), a) - DenseMatrix::identity(r)).frobenius_norm());
                    if (!m.empty()) {
                        worst_ma =
                            std::max(worst_ma, la::matmul(m.transpose(), a).frobenius_norm());
                        DenseMatrix db(r, d);
                        for (double& v : db.data()) v = crng.gaussian();
                        DenseMatrix adb = la::matmul(a, db);
                        for (int trial = 0; trial < 10; ++trial) {
                            DenseMatrix c(m.cols(), d);
                            for (double& v : c.data()) v = crng.gaussian();
                            DenseMatrix mcdir = la::matmul(m, c);
                            double scale = adb.frobenius_norm() * mcdir.frobenius_norm();
                            if (scale == 0.0) continue;
                            worst_dot = std::max(
                                worst_dot, std::fabs(la::frobenius_dot(adb, mcdir)) / scale);
                        }
                    }
                }
            }
        }
        if (t == 0) {
            // Install the selected bases and keep the run going one more task.
            std::vector<std::pair<DenseMatrix, DenseMatrix>> next;
            for (int l = 0; l < L; ++l)
                next.emplace_back(random_orthonormal(d, r, 90 + (std::uint64_t)l),
                                  random_orthonormal(d, r, 95 + (std::uint64_t)l));
            global = merge_current_task(global);
            global = begin_task(global, next, 2);
        }
    }
    bool pass = exercised && worst_ma <= 1e-8 && worst_ortho <= 1e-10 && worst_dot <= 1e-8;
    report(3, "orthogonality suite", pass,
           "max |M^T A| " + fmt(worst_ma) + ", |A^T A - I| " + fmt(worst_ortho) +
               ", scaled <A dB, M C> " + fmt(worst_dot));
}

// ---------------------------------------------------------------- criterion 4

double energy_ratio(const DenseMatrix& basis, const DenseMatrix& h) {
    double total = h.frobenius_norm();
    if (total == 0.0) return 1.0;
    double covered = la::matmul(basis.transpose(), h).frobenius_norm();
    return (covered * covered) / (total * total);
}

void criterion_energy() {
    const int d = 8;
    const double eps = 0.95;
    MemoryConfig mc;
    mc.energy_threshold = eps;
    mc.activation_cap = 64;
    SubspaceMemory mem = memory_init(d);
    DenseMatrix prev_projector(d, d);
    int prev_dim = 0;
    bool switched = false, pass = true;
    std::string detail;
    for (int step = 0; step < 3; ++step) {
        // Rank 3, then 3 fresh directions, then 2 more: forces the stored
        // side to flip past ceil(d/2).
        DenseMatrix h = la::matmul(random_matrix(d, 3, 400 + (std::uint64_t)step),
                                   random_matrix(3, 24, 500 + (std::uint64_t)step));
        ActivationBuffer buf(0, Projection::Key, d, 64, 9);
        for (int j = 0; j < h.cols(); ++j) {
            std::vector<double> col((std::size_t)d);
            for (int i = 0; i < d; ++i) col[(std::size_t)i] = h(i, j);
            buf.offer(col);
        }
        StoredSide before = mem.stored_side;
        mem = update_memory(mem, buf, mc);
        DenseMatrix bg = effective_gradient_basis(mem);
        DenseMatrix projector = la::matmul(bg, bg.transpose());
        if (mem.memory_dim < d && energy_ratio(bg, h) < eps) {
            pass = false;
            detail += "energy ratio below threshold at step " + std::to_string(step) + "; ";
        }
        if (mem.memory_dim < prev_dim) {
            pass = false;
            detail += "memory_dim decreased; ";
        }
        // Earlier memory must survive every update, including representation
        // switches: P_new P_old == P_old.
        double drift =
            (la::matmul(projector, prev_projector) - prev_projector).frobenius_norm();
        if (drift > 1e-8) {
            pass = false;
            detail += "projector not preserved (" + fmt(drift) + ") at step " +
                      std::to_string(step) + "; ";
        }
        double trace = 0.0;
        for (int i = 0; i < d; ++i) trace += projector(i, i);
        if (std::fabs(trace - mem.memory_dim) > 1e-8) {
            pass = false;
            detail += "projector rank mismatch; ";
        }
        if (mem.stored_side != before && before == StoredSide::GradientSpace) switched = true;
        prev_projector = projector;
        prev_dim = mem.memory_dim;
    }
    if (!switched) {
        pass = false;
        detail += "representation switch never exercised; ";
    }
    report(4, "subspace energy criterion", pass,
           detail.empty() ? "grew to dim " + std::to_string(prev_dim) + " with side switch"
                          : detail);
}

// ---------------------------------------------------------------- criterion 5

// Centralized oracle: sequential training on one shard, walking the same
// derived seed streams the experiment runner documents for client 0.
struct CentralizedRun {
    std::vector<std::vector<double>> accuracy_rows;
    std::vector<std::vector<double>> round_losses;
};

CentralizedRun centralized_run(const ExperimentConfig& cfg) {
    Dataset dataset = generate_synthetic(cfg.data);
    TaskSchedule schedule =
        build_schedule(dataset, cfg.num_tasks, derive_seed(cfg.seed, kTagSchedule));
    PartitionPlan plan = build_partition(dataset, schedule, 1, cfg.beta, cfg.seed);
    auto backbone = std::make_shared<Backbone>(
        init_backbone(cfg.backbone, derive_seed(cfg.seed, kTagBackbone)));
    const int d = cfg.backbone.embed_dim, L = cfg.backbone.num_layers, r = cfg.rank;
    const int cpt = schedule.classes_per_task();

    ModelState model = make_model(backbone);
    CaptureSink sink(L, d, cfg.memory.activation_cap, derive_seed(cfg.seed ^ kTagCapture, 1));
    std::vector<std::array<SubspaceMemory, 2>> memories;
    for (int l = 0; l < L; ++l) memories.push_back({memory_init(d), memory_init(d)});
    MemoryConfig mc = cfg.memory;
    mc.rank = r;

    auto reseed = [&](int task, int tag) {
        for (int l = 0; l < L; ++l)
            for (int pr = 0; pr < 2; ++pr)
                sink.buffers[(std::size_t)l][(std::size_t)pr].reseed(
                    derive_seed(cfg.seed ^ kTagCapture, 1, (std::uint64_t)(task * 4096 + tag),
                                (std::uint64_t)(l * 2 + pr)));
    };
    auto next_a = [&](int for_task, bool skip_update) {
        std::vector<std::pair<DenseMatrix, DenseMatrix>> out;
        for (int l = 0; l < L; ++l) {
            std::array<DenseMatrix, 2> pair;
            for (int pr = 0; pr < 2; ++pr) {
                ActivationBuffer& buf = sink.buffers[(std::size_t)l][(std::size_t)pr];
                SubspaceMemory& mem = memories[(std::size_t)l][(std::size_t)pr];
                if (!skip_update) mem = update_memory(mem, buf, mc);
                DenseMatrix cand = select_adapter_basis(mem, buf, r);
                int repairs = 0;
                pair[(std::size_t)pr] = aggregate_a(
                    {cand}, {},
                    derive_seed(cfg.seed ^ kTagRepair, (std::uint64_t)for_task + 1,
                                (std::uint64_t)(l * 2 + pr)),
                    &repairs);
            }
            out.emplace_back(pair[0], pair[1]);
        }
        sink.clear();
        return out;
    };

    // Bootstrap: forward-only calibration over the task-0 shard.
    const std::vector<int>& shard0 = plan.assignments[0][0];
    reseed(0, 2048);
    for (std::size_t start = 0; start < shard0.size(); start += (std::size_t)cfg.round.batch_size) {
        std::size_t end = std::min(shard0.size(), start + (std::size_t)cfg.round.batch_size);
        DenseMatrix batch((int)(end - start), dataset.input_dim());
        for (std::size_t i = start; i < end; ++i)
            for (int j = 0; j < dataset.input_dim(); ++j)
                batch((int)(i - start), j) = dataset.samples(shard0[i], j);
        forward(model, batch, &sink);
    }
    auto pending = next_a(0, true);

    CentralizedRun result;
    for (int t = 0; t < cfg.num_tasks; ++t) {
        model = begin_task(model, pending, cpt);
        const std::vector<int>& shard = plan.assignments[(std::size_t)t][0];
        std::vector<double> losses;
        for (int round = 0; round < cfg.round.rounds_per_task; ++round) {
            SplitMix64 rng(derive_seed(cfg.seed ^ kTagTrain, 1, (std::uint64_t)t + 1,
                                       (std::uint64_t)round + 1));
            reseed(t, round);
            OptimizerState opt = OptimizerState::fresh(model, cpt);
            AdamWParams params;
            params.lr_adapter = cfg.adapter_lr;
            params.lr_head = cfg.head_lr;
            params.weight_decay = cfg.weight_decay;
            std::vector<int> order = shard;
            double last = 0.0;
            for (int epoch = 0; epoch < cfg.round.local_epochs; ++epoch) {
                rng.shuffle(order);
                const bool final_epoch = (epoch == cfg.round.local_epochs - 1);
                double epoch_loss = 0.0;
                for (std::size_t start = 0; start < order.size();
                     start += (std::size_t)cfg.round.batch_size) {
                    std::size_t end =
                        std::min(order.size(), start + (std::size_t)cfg.round.batch_size);
                    DenseMatrix batch((int)(end - start), dataset.input_dim());
                    std::vector<int> labels;
                    for (std::size_t i = start; i < end; ++i) {
                        for (int j = 0; j < dataset.input_dim(); ++j)
                            batch((int)(i - start), j) = dataset.samples(order[i], j);
                        labels.push_back(
                            schedule.head_row_of_class(dataset.labels[(std::size_t)order[i]]));
                    }
                    GradientSet grads =
                        loss_and_grads(model, batch, labels, t * cpt, (t + 1) * cpt,
                                       final_epoch ? &sink : nullptr);
                    epoch_loss += grads.loss * (double)(end - start);
                    apply_adamw(model, grads, opt, params, t * cpt);
                }
                last = epoch_loss / (double)order.size();
            }
            losses.push_back(last);
        }
        result.round_losses.push_back(losses);
        model = merge_current_task(model);
        if (t + 1 < cfg.num_tasks) pending = next_a(t + 1, false);
        result.accuracy_rows.push_back(evaluate(model, dataset, schedule, t + 1));
    }
    return result;
}

void criterion_aggregation() {
    // Part A: weighted-mean oracle on aggregate_b.
    const int d = 6, r = 2;
    BackboneConfig bc;
    bc.embed_dim = d;
    bc.num_layers = 1;
    bc.num_tokens = 3;
    bc.input_dim = 4;
    auto backbone = std::make_shared<Backbone>(init_backbone(bc, 61));
    ModelState global = make_model(backbone);
    DenseMatrix a = random_orthonormal(d, r, 62);
    global = begin_task(global, {{a, a}}, 2);
    std::vector<ClientUpdate> updates(3);
    std::vector<long long> weights = {5, 12, 3};
    for (int k = 0; k < 3; ++k) {
        updates[(std::size_t)k].client_id = k;
        updates[(std::size_t)k].n_k = weights[(std::size_t)k];
        updates[(std::size_t)k].b_k = {random_matrix(r, d, 700 + (std::uint64_t)k)};
        updates[(std::size_t)k].b_v = {random_matrix(r, d, 800 + (std::uint64_t)k)};
        updates[(std::size_t)k].head_rows = random_matrix(2, d, 900 + (std::uint64_t)k);
    }
    aggregate_b(global, updates, 0);
    double worst = 0.0;
    double total = 20.0;
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < d; ++j) {
            double wk = 0.0, wv = 0.0;
            for (int k = 0; k < 3; ++k) {
                wk += (double)weights[(std::size_t)k] / total *
                      updates[(std::size_t)k].b_k[0](i, j);
                wv += (double)weights[(std::size_t)k] / total *
                      updates[(std::size_t)k].b_v[0](i, j);
            }
            worst = std::max(worst, std::fabs(global.adapters[0].key.b(i, j) - wk));
            worst = std::max(worst, std::fabs(global.adapters[0].value.b(i, j) - wv));
        }
    }

    // Part B: one-client federation == centralized sequential training.
    ExperimentConfig cfg;
    cfg.backbone.embed_dim = 16;
    cfg.backbone.num_layers = 2;
    cfg.backbone.num_tokens = 3;
    cfg.backbone.input_dim = 8;
    cfg.data.num_classes = 4;
    cfg.data.samples_per_class = 20;
    cfg.data.input_dim = 8;
    cfg.data.seed = 5;
    cfg.num_tasks = 2;
    cfg.rank = 2;
    cfg.round.num_clients = 1;
    cfg.round.local_epochs = 3;
    cfg.round.rounds_per_task = 2;
    cfg.round.batch_size = 8;
    cfg.memory.energy_threshold = 0.5;
    cfg.memory.activation_cap = 64;
    cfg.seed = 41;

    ExperimentResult fed = run_experiment(cfg);
    CentralizedRun central = centralized_run(cfg);
    bool bitwise = fed.accuracy.rows == central.accuracy_rows;
    for (std::size_t t = 0; bitwise && t < fed.tasks.size(); ++t)
        bitwise = fed.tasks[t].round_losses == central.round_losses[t];

    report(5, "aggregation oracle", worst <= 1e-15 && bitwise,
           "weighted-mean err " + fmt(worst) +
               (bitwise ? ", single-client == centralized" : ", single-client DIVERGED"));
}

// ---------------------------------------------------------------- criterion 6

double gini_of_sizes(const std::vector<std::vector<int>>& clients) {
    std::vector<double> sizes;
    for (const auto& c : clients) sizes.push_back((double)c.size());
    double mean = std::accumulate(sizes.begin(), sizes.end(), 0.0) / sizes.size();
    double mad = 0.0;
    for (double x : sizes)
        for (double y : sizes) mad += std::fabs(x - y);
    return mad / (2.0 * mean * (double)(sizes.size() * sizes.size()));
}

void criterion_dirichlet() {
    const int n = 600, clients = 6, classes = 6;
    std::vector<int> labels((std::size_t)n);
    for (int i = 0; i < n; ++i) labels[(std::size_t)i] = i % classes;
    bool cover = true, uniform = true;
    double gini_skew = 0.0, gini_flat = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        auto flat = dirichlet_partition(labels, clients, 1e6, seed);
        auto skew = dirichlet_partition(labels, clients, 0.1, seed);
        for (const auto* part : {&flat, &skew}) {
            std::set<int> seen;
            std::size_t total = 0;
            for (const auto& c : *part) {
                total += c.size();
                seen.insert(c.begin(), c.end());
            }
            if (total != (std::size_t)n || seen.size() != (std::size_t)n ||
                *seen.begin() != 0 || *seen.rbegin() != n - 1)
                cover = false;
        }
        for (const auto& c : flat) {
            double share = (double)c.size();
            if (share < 0.8 * n / clients || share > 1.2 * n / clients) uniform = false;
        }
        gini_flat += gini_of_sizes(flat) / 20.0;
        gini_skew += gini_of_sizes(skew) / 20.0;
    }
    bool pass = cover && uniform && gini_skew > gini_flat;
    report(6, "dirichlet partitioner", pass,
           "gini(0.1)=" + fmt(gini_skew) + " > gini(1e6)=" + fmt(gini_flat) +
               (cover ? "" : "; COVER BROKEN") + (uniform ? "" : "; NON-UNIFORM AT 1e6"));
}

// ---------------------------------------------------------------- criterion 7

ExperimentConfig forgetting_config(std::uint64_t seed, bool random_a) {
    ExperimentConfig cfg;
    cfg.backbone.embed_dim = 12;
    cfg.backbone.num_layers = 1;
    cfg.backbone.num_tokens = 2;
    cfg.backbone.input_dim = 16;
    cfg.data.num_classes = 6;
    cfg.data.samples_per_class = 60;
    cfg.data.input_dim = 16;
    cfg.data.cluster_spread = 0.5;
    cfg.data.cluster_separation = 4.0;
    cfg.data.seed = derive_seed(seed, 0xda7a);
    cfg.num_tasks = 3;
    cfg.rank = 2;
    cfg.round.num_clients = 2;
    cfg.round.local_epochs = 6;
    cfg.round.rounds_per_task = 2;
    cfg.round.batch_size = 8;
    cfg.beta = 1000.0;
    cfg.adapter_lr = 2e-2;
    cfg.head_lr = 1e-2;
    cfg.memory.energy_threshold = 0.90;
    cfg.memory.activation_cap = 128;
    cfg.seed = seed;
    cfg.ablation.random_a = random_a;
    return cfg;
}

void criterion_forgetting() {
    auto t0 = std::chrono::steady_clock::now();
    int wins = 0;
    double mean_task1_dual = 0.0, mean_task1_rand = 0.0;
    std::string margins;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        ExperimentResult dual = run_experiment(forgetting_config(seed, false));
        ExperimentResult rand = run_experiment(forgetting_config(seed, true));
        if (dual.final_average_accuracy > rand.final_average_accuracy) ++wins;
        mean_task1_dual += dual.accuracy.rows[2][0] / 5.0;
        mean_task1_rand += rand.accuracy.rows[2][0] / 5.0;
        margins += fmt(dual.final_average_accuracy - rand.final_average_accuracy) + " ";
    }
    double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool pass = wins >= 4 && mean_task1_dual > mean_task1_rand && seconds < 300.0;
    report(7, "forgetting ablation", pass,
           "wins " + std::to_string(wins) + "/5, task-1 acc " + fmt(mean_task1_dual) + " vs " +
               fmt(mean_task1_rand) + ", margins [" + margins + "], " + fmt(seconds) + "s");
}

// ---------------------------------------------------------------- criterion 8

void criterion_faa() {
    SplitMix64 rng(777);
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        int tasks = 2 + (int)rng.below(6);
        AccuracyMatrix m;
        double hand = 0.0;
        for (int t = 0; t < tasks; ++t) {
            std::vector<double> row;
            for (int j = 0; j <= t; ++j) row.push_back(rng.uniform());
            if (t == tasks - 1)
                hand = std::accumulate(row.begin(), row.end(), 0.0) / (double)row.size();
            m.append_row(row);
        }
        worst = std::max(worst, std::fabs(faa(m) - hand));
    }
    report(8, "final average accuracy", worst <= 1e-12, "max err " + fmt(worst));
}

// ---------------------------------------------------------------- criterion 9

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void criterion_determinism() {
    const char* cli = std::getenv("DOLFIN_CLI");
    bool reports_equal = false;
    std::string detail;
    if (!cli) {
        detail = "DOLFIN_CLI not set; ";
    } else {
        std::string dir = "acceptance_tmp";
        std::string cfg_path = dir + "_config.ini";
        ExperimentConfig cfg;
        cfg.backbone.embed_dim = 16;
        cfg.backbone.num_layers = 1;
        cfg.backbone.num_tokens = 3;
        cfg.backbone.input_dim = 8;
        cfg.data.num_classes = 4;
        cfg.data.samples_per_class = 20;
        cfg.data.input_dim = 8;
        cfg.num_tasks = 2;
        cfg.round.num_clients = 2;
        cfg.round.local_epochs = 2;
        cfg.round.batch_size = 8;
        cfg.memory.energy_threshold = 0.5;
        cfg.memory.activation_cap = 64;
        cfg.seed = 19;
        std::ofstream(cfg_path) << serialize_config(cfg);
        std::string quiet = " > /dev/null 2>&1";
        int rc1 = std::system((std::string(cli) + " run --config " + cfg_path + " --report " +
                               dir + "_r1.txt --csv " + dir + "_c1.csv" + quiet)
                                  .c_str());
        int rc2 = std::system((std::string(cli) + " run --config " + cfg_path + " --report " +
                               dir + "_r2.txt --csv " + dir + "_c2.csv" + quiet)
                                  .c_str());
        std::string r1 = slurp(dir + "_r1.txt"), r2 = slurp(dir + "_r2.txt");
        reports_equal = rc1 == 0 && rc2 == 0 && !r1.empty() && r1 == r2 &&
                        slurp(dir + "_c1.csv") == slurp(dir + "_c2.csv");
        for (const char* suffix : {"_config.ini", "_r1.txt", "_r2.txt", "_c1.csv", "_c2.csv"})
            std::remove((dir + suffix).c_str());
        detail = reports_equal ? "byte-identical reports; " : "reports differ; ";
    }

    // Checkpoint round trip, bit-exact.
    BackboneConfig bc;
    bc.embed_dim = 8;
    bc.num_layers = 2;
    bc.num_tokens = 3;
    bc.input_dim = 6;
    auto backbone = std::make_shared<Backbone>(init_backbone(bc, 3));
    ModelState model = make_model(backbone);
    model = begin_task(model,
                       {{random_orthonormal(8, 2, 11), random_orthonormal(8, 2, 12)},
                        {random_orthonormal(8, 2, 13), random_orthonormal(8, 2, 14)}},
                       2);
    model.adapters[0].key.b = random_matrix(2, 8, 15);
    model.head = random_matrix(2, 8, 16);
    std::vector<std::array<SubspaceMemory, 2>> memories;
    for (int l = 0; l < 2; ++l) {
        std::array<SubspaceMemory, 2> pair;
        for (int pr = 0; pr < 2; ++pr) {
            SubspaceMemory mem = memory_init(8);
            mem.basis = random_orthonormal(8, 3, 20 + (std::uint64_t)(2 * l + pr));
            mem.memory_dim = 3;
            pair[(std::size_t)pr] = mem;
        }
        memories.push_back(pair);
    }
    std::string bytes = encode_checkpoint(model, memories);
    Checkpoint ck = decode_checkpoint(bytes, backbone);
    bool roundtrip = encode_checkpoint(ck.model, ck.memories) == bytes;
    detail += roundtrip ? "checkpoint lossless" : "checkpoint LOSSY";
    report(9, "determinism & persistence", reports_equal && roundtrip, detail);
}

// --------------------------------------------------------------- criterion 10

void criterion_communication() {
    bool pass = true;
    std::string detail;
    for (int r : {1, 2, 32}) {
        CommConfig cc;
        cc.num_layers = 2;
        cc.embed_dim = 32;
        cc.rank = r;
        cc.num_clients = 3;
        cc.rounds_per_task = 2;
        cc.num_tasks = 2;
        cc.classes_per_task = 5;
        CommLedger ledger = comm_cost(cc);

        // Closed form, computed independently: every round each client
        // uploads L*(2*r*d) B-parameters plus classes_per_task*d head rows;
        // task-boundary rounds add the L*(2*r*d) A upload. Downloads mirror
        // the upload plus the A bases for the task.
        long long adapter = 2LL * r * cc.embed_dim * cc.num_layers;
        long long head = (long long)cc.classes_per_task * cc.embed_dim;
        long long up = 0, down = 0;
        for (int t = 0; t < cc.num_tasks; ++t) {
            for (int round = 0; round < cc.rounds_per_task; ++round) {
                bool boundary = (round == cc.rounds_per_task - 1);
                up += (long long)cc.num_clients * (adapter + head + (boundary ? adapter : 0));
                down += (long long)cc.num_clients * (adapter + head + adapter);
            }
        }
        long long got_up = 0, got_down = 0;
        for (const auto& e : ledger.entries) {
            got_up += e.upload_params;
            got_down += e.download_params;
        }
        if (got_up != up || got_down != down) {
            pass = false;
            detail += "r=" + std::to_string(r) + " mismatch (" + std::to_string(got_up) + " vs " +
                      std::to_string(up) + "); ";
        }
    }
    report(10, "communication accounting", pass,
           detail.empty() ? "closed form matches for rank 1, 2, 32" : detail);
}

}  // namespace

int main() {
    criterion_gradients();
    criterion_merge_equivalence();
    criterion_orthogonality();
    criterion_energy();
    criterion_aggregation();
    criterion_dirichlet();
    criterion_forgetting();
    criterion_faa();
    criterion_determinism();
    criterion_communication();
    if (g_failures > 0) {
        std::printf("%d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("all criteria passed\n");
    return 0;
}

#include "dolfin/federated.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "dolfin/linalg.hpp"
#include "dolfin/rng.hpp"

namespace dolfin {

namespace la = linalg;

namespace {

// Tags keeping the derived seed streams disjoint.
constexpr std::uint64_t kTagPartition = 0x9a27;
constexpr std::uint64_t kTagTrain = 0x10ca;
constexpr std::uint64_t kTagCapture = 0xcafe;
constexpr std::uint64_t kTagSelect = 0x5e1e;
constexpr std::uint64_t kTagRepair = 0x4e9a;
constexpr std::uint64_t kTagRandomA = 0xab1a;
constexpr std::uint64_t kTagBackbone = 0xbb01;
constexpr std::uint64_t kTagSchedule = 0x5c4e;

}  // namespace

std::vector<std::vector<int>> dirichlet_partition(const std::vector<int>& labels, int num_clients,
                                                  double beta, std::uint64_t seed) {
    if (beta <= 0.0) throw ConfigError("dirichlet_partition: beta must be > 0");
    if (num_clients < 1) throw ConfigError("dirichlet_partition: need at least one client");
    if (static_cast<int>(labels.size()) < num_clients) {
        throw ConfigError("dirichlet_partition: fewer samples than clients");
    }
    std::vector<std::vector<int>> clients(static_cast<std::size_t>(num_clients));
    if (num_clients == 1) {
        clients[0].resize(labels.size());
        std::iota(clients[0].begin(), clients[0].end(), 0);
        return clients;
    }
    SplitMix64 rng(derive_seed(seed, kTagPartition));
    std::vector<int> classes;
    for (int lab : labels) {
        if (std::find(classes.begin(), classes.end(), lab) == classes.end()) classes.push_back(lab);
    }
    std::sort(classes.begin(), classes.end());
    for (int cls : classes) {
        std::vector<int> positions;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == cls) positions.push_back(static_cast<int>(i));
        }
        rng.shuffle(positions);
        std::vector<double> p = rng.dirichlet(beta, num_clients);
        const int n = static_cast<int>(positions.size());
        // Largest-remainder rounding of p * n.
        std::vector<int> counts(static_cast<std::size_t>(num_clients));
        std::vector<std::pair<double, int>> remainder;
        int assigned = 0;
        for (int k = 0; k < num_clients; ++k) {
            double share = p[static_cast<std::size_t>(k)] * n;
            counts[static_cast<std::size_t>(k)] = static_cast<int>(std::floor(share));
            assigned += counts[static_cast<std::size_t>(k)];
            remainder.emplace_back(share - std::floor(share), k);
        }
        std::stable_sort(remainder.begin(), remainder.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        for (int i = 0; i < n - assigned; ++i) ++counts[static_cast<std::size_t>(remainder[static_cast<std::size_t>(i)].second)];
        int cursor = 0;
        for (int k = 0; k < num_clients; ++k) {
            for (int c = 0; c < counts[static_cast<std::size_t>(k)]; ++c)
                clients[static_cast<std::size_t>(k)].push_back(positions[static_cast<std::size_t>(cursor++)]);
        }
    }
    // Repair empty clients from the largest one.
    for (int k = 0; k < num_clients; ++k) {
        auto& mine = clients[static_cast<std::size_t>(k)];
        while (mine.empty()) {
            int donor = 0;
            for (int j = 1; j < num_clients; ++j) {
                if (clients[static_cast<std::size_t>(j)].size() >
                    clients[static_cast<std::size_t>(donor)].size())
                    donor = j;
            }
            if (clients[static_cast<std::size_t>(donor)].size() <= 1) {
                throw DataError("dirichlet_partition: cannot repair empty client");
            }
            mine.push_back(clients[static_cast<std::size_t>(donor)].back());
            clients[static_cast<std::size_t>(donor)].pop_back();
        }
    }
    for (auto& c : clients) std::sort(c.begin(), c.end());
    return clients;
}

PartitionPlan build_partition(const Dataset& dataset, const TaskSchedule& schedule,
                              int num_clients, double beta, std::uint64_t seed) {
    PartitionPlan plan;
    plan.beta = beta;
    for (int t = 0; t < schedule.num_tasks(); ++t) {
        std::vector<int> global_idx;
        for (int cls : schedule.tasks[static_cast<std::size_t>(t)]) {
            for (int i : dataset.indices_of(Split::Train, cls)) global_idx.push_back(i);
        }
        std::sort(global_idx.begin(), global_idx.end());
        std::vector<int> labels;
        labels.reserve(global_idx.size());
        for (int i : global_idx) labels.push_back(dataset.labels[static_cast<std::size_t>(i)]);
        auto positions = dirichlet_partition(labels, num_clients, beta,
                                             derive_seed(seed, kTagPartition, (std::uint64_t)t + 1));
        std::vector<std::vector<int>> mapped(static_cast<std::size_t>(num_clients));
        for (int k = 0; k < num_clients; ++k) {
            for (int pos : positions[static_cast<std::size_t>(k)])
                mapped[static_cast<std::size_t>(k)].push_back(global_idx[static_cast<std::size_t>(pos)]);
        }
        plan.assignments.push_back(std::move(mapped));
    }
    return plan;
}

std::vector<int> select_participants(int num_clients, double participation, std::uint64_t seed) {
    int m = std::max(1, static_cast<int>(std::lround(participation * num_clients)));
    m = std::min(m, num_clients);
    std::vector<int> ids(static_cast<std::size_t>(num_clients));
    std::iota(ids.begin(), ids.end(), 0);
    if (m < num_clients) {
        SplitMix64 rng(seed);
        rng.shuffle(ids);
        ids.resize(static_cast<std::size_t>(m));
        std::sort(ids.begin(), ids.end());
    }
    return ids;
}

void broadcast(const ServerState& server, std::vector<ClientState>& clients,
               const std::vector<int>& selected) {
    for (int id : selected) {
        clients[static_cast<std::size_t>(id)].replica = server.global;
        clients[static_cast<std::size_t>(id)].has_replica = true;
    }
}

ClientUpdate local_train(ClientState& client, const Dataset& dataset,
                         const std::vector<int>& shard, const TaskSchedule& schedule,
                         const ExperimentConfig& cfg, int task, int round) {
    if (!client.has_replica) throw StateError("local_train: client has no fresh replica");
    if (shard.empty()) throw ContractViolation("local_train: empty shard");
    ModelState& model = client.replica;
    const int cpt = schedule.classes_per_task();
    const int row_lo = task * cpt;
    const int row_hi = row_lo + cpt;

    SplitMix64 rng(derive_seed(cfg.seed ^ kTagTrain, (std::uint64_t)client.client_id + 1,
                               (std::uint64_t)task + 1, (std::uint64_t)round + 1));
    for (int l = 0; l < cfg.backbone.num_layers; ++l) {
        for (int pr = 0; pr < 2; ++pr) {
            client.sink.buffers[static_cast<std::size_t>(l)][static_cast<std::size_t>(pr)].reseed(
                derive_seed(cfg.seed ^ kTagCapture, (std::uint64_t)client.client_id + 1,
                            (std::uint64_t)(task * 4096 + round),
                            (std::uint64_t)(l * 2 + pr)));
        }
    }

    OptimizerState opt = OptimizerState::fresh(model, cpt);
    AdamWParams params;
    params.lr_adapter = cfg.adapter_lr;
    params.lr_head = cfg.head_lr;
    params.weight_decay = cfg.weight_decay;

    ClientUpdate update;
    update.client_id = client.client_id;
    update.n_k = static_cast<long long>(shard.size());

    std::vector<int> order = shard;
    for (int epoch = 0; epoch < cfg.round.local_epochs; ++epoch) {
        rng.shuffle(order);
        const bool final_epoch = (epoch == cfg.round.local_epochs - 1);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += (std::size_t)cfg.round.batch_size) {
            std::size_t end = std::min(order.size(), start + (std::size_t)cfg.round.batch_size);
            DenseMatrix batch(static_cast<int>(end - start), dataset.input_dim());
            std::vector<int> labels;
            for (std::size_t i = start; i < end; ++i) {
                int idx = order[i];
                for (int j = 0; j < dataset.input_dim(); ++j)
                    batch(static_cast<int>(i - start), j) = dataset.samples(idx, j);
                labels.push_back(
                    schedule.head_row_of_class(dataset.labels[static_cast<std::size_t>(idx)]));
            }
            GradientSet grads = loss_and_grads(model, batch, labels, row_lo, row_hi,
                                               final_epoch ? &client.sink : nullptr);
            epoch_loss += grads.loss * static_cast<double>(end - start);
            apply_adamw(model, grads, opt, params, row_lo);
        }
        epoch_loss /= static_cast<double>(order.size());
        if (epoch == 0) update.first_epoch_loss = epoch_loss;
        update.last_epoch_loss = epoch_loss;
    }

    for (const auto& ad : model.adapters) {
        update.b_k.push_back(ad.key.b);
        update.b_v.push_back(ad.value.b);
    }
    update.head_rows = DenseMatrix(cpt, model.head.cols());
    for (int i = 0; i < cpt; ++i)
        for (int j = 0; j < model.head.cols(); ++j) update.head_rows(i, j) = model.head(row_lo + i, j);
    client.has_replica = false;
    return update;
}

void aggregate_b(ModelState& global, std::vector<ClientUpdate> updates, int head_row_lo) {
    if (updates.empty()) throw ProtocolError("aggregate_b: no client updates");
    std::sort(updates.begin(), updates.end(),
              [](const ClientUpdate& a, const ClientUpdate& b) { return a.client_id < b.client_id; });
    double total = 0.0;
    for (const auto& u : updates) total += static_cast<double>(u.n_k);
    const std::size_t layers = global.adapters.size();
    for (const auto& u : updates) {
        if (u.b_k.size() != layers || u.b_v.size() != layers) {
            throw ProtocolError("aggregate_b: layer count mismatch from client " +
                                std::to_string(u.client_id));
        }
        for (std::size_t l = 0; l < layers; ++l) {
            if (u.b_k[l].rows() != global.adapters[l].key.b.rows() ||
                u.b_k[l].cols() != global.adapters[l].key.b.cols() ||
                u.b_v[l].rows() != global.adapters[l].value.b.rows() ||
                u.b_v[l].cols() != global.adapters[l].value.b.cols()) {
                throw ProtocolError("aggregate_b: B shape mismatch from client " +
                                    std::to_string(u.client_id));
            }
        }
        if (u.head_rows.cols() != global.head.cols()) {
            throw ProtocolError("aggregate_b: head shape mismatch from client " +
                                std::to_string(u.client_id));
        }
    }
    for (std::size_t l = 0; l < layers; ++l) {
        DenseMatrix bk(global.adapters[l].key.b.rows(), global.adapters[l].key.b.cols());
        DenseMatrix bv(global.adapters[l].value.b.rows(), global.adapters[l].value.b.cols());
        for (const auto& u : updates) {
            double w = static_cast<double>(u.n_k) / total;
            bk += w * u.b_k[l];
            bv += w * u.b_v[l];
        }
        global.adapters[l].key.b = std::move(bk);
        global.adapters[l].value.b = std::move(bv);
    }
    DenseMatrix head(updates.front().head_rows.rows(), global.head.cols());
    for (const auto& u : updates) head += (static_cast<double>(u.n_k) / total) * u.head_rows;
    for (int i = 0; i < head.rows(); ++i)
        for (int j = 0; j < head.cols(); ++j) global.head(head_row_lo + i, j) = head(i, j);
}

AdapterCandidates client_next_a(ClientState& client, const MemoryConfig& memory, int rank,
                                bool skip_memory_update) {
    AdapterCandidates out;
    for (std::size_t l = 0; l < client.memories.size(); ++l) {
        std::array<DenseMatrix, 2> pair;
        for (int pr = 0; pr < 2; ++pr) {
            ActivationBuffer& buf = client.sink.buffers[l][static_cast<std::size_t>(pr)];
            SubspaceMemory& mem = client.memories[l][static_cast<std::size_t>(pr)];
            try {
                if (!skip_memory_update) mem = update_memory(mem, buf, memory);
                pair[static_cast<std::size_t>(pr)] = select_adapter_basis(mem, buf, rank);
            } catch (const CapacityError& e) {
                throw CapacityError("client " + std::to_string(client.client_id) + " layer " +
                                    std::to_string(l) + " " +
                                    projection_name(static_cast<Projection>(pr)) + ": " + e.what());
            } catch (const RankError& e) {
                throw RankError("client " + std::to_string(client.client_id) + " layer " +
                                std::to_string(l) + " " +
                                projection_name(static_cast<Projection>(pr)) + ": " + e.what());
            }
        }
        out.push_back(std::move(pair));
    }
    client.sink.clear();
    return out;
}

namespace {

DenseMatrix orthonormalize_with_repair(const DenseMatrix& m, std::uint64_t seed, int* repairs) {
    const int d = m.rows();
    const int r = m.cols();
    DenseMatrix q(d, r);
    SplitMix64 rng(seed);
    auto project_out = [&](std::vector<double>& v, int upto) {
        for (int pass = 0; pass < 2; ++pass) {
            for (int k = 0; k < upto; ++k) {
                double dot = 0.0;
                for (int i = 0; i < d; ++i) dot += q(i, k) * v[static_cast<std::size_t>(i)];
                for (int i = 0; i < d; ++i) v[static_cast<std::size_t>(i)] -= dot * q(i, k);
            }
        }
    };
    for (int j = 0; j < r; ++j) {
        std::vector<double> v(static_cast<std::size_t>(d));
        for (int i = 0; i < d; ++i) v[static_cast<std::size_t>(i)] = m(i, j);
        project_out(v, j);
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        while (norm < 1e-10) {
            // Deficient column: replace by a seeded direction from the
            // complement of what has accumulated so far.
            if (repairs) ++*repairs;
            for (double& x : v) x = rng.gaussian();
            project_out(v, j);
            norm = 0.0;
            for (double x : v) norm += x * x;
            norm = std::sqrt(norm);
            if (norm < 1e-6) norm = 0.0;  // pathological draw, retry
        }
        int arg = 0;
        double best = 0.0;
        for (int i = 0; i < d; ++i) {
            if (std::fabs(v[static_cast<std::size_t>(i)]) > best) {
                best = std::fabs(v[static_cast<std::size_t>(i)]);
                arg = i;
            }
        }
        double sign = v[static_cast<std::size_t>(arg)] < 0.0 ? -1.0 : 1.0;
        for (int i = 0; i < d; ++i) q(i, j) = sign * v[static_cast<std::size_t>(i)] / norm;
    }
    return q;
}

}  // namespace

DenseMatrix aggregate_a(const std::vector<DenseMatrix>& candidates,
                        const std::vector<double>& weights, std::uint64_t repair_seed,
                        int* repairs) {
    if (candidates.empty()) throw ProtocolError("aggregate_a: no candidates");
    DenseMatrix mean(candidates.front().rows(), candidates.front().cols());
    double total = 0.0;
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        if (candidates[k].rows() != mean.rows() || candidates[k].cols() != mean.cols()) {
            throw ProtocolError("aggregate_a: candidate shape mismatch at index " +
                                std::to_string(k));
        }
        double w = weights.empty() ? 1.0 : weights[k];
        total += w;
        mean += w * candidates[k];
    }
    mean *= 1.0 / total;
    return orthonormalize_with_repair(mean, repair_seed, repairs);
}

namespace {

std::array<DenseMatrix, 2> random_orthonormal_pair(int d, int r, std::uint64_t seed) {
    std::array<DenseMatrix, 2> out;
    SplitMix64 rng(seed);
    for (int pr = 0; pr < 2; ++pr) {
        DenseMatrix g(d, r);
        for (double& v : g.data()) v = rng.gaussian();
        out[static_cast<std::size_t>(pr)] = la::qr_orthonormalize(g);
    }
    return out;
}

// Forward-only calibration pass over the client's task shard, capturing
// activations for the A-basis bootstrap.
void calibration_pass(ClientState& client, const Dataset& dataset, const std::vector<int>& shard,
                      const ExperimentConfig& cfg, int task) {
    for (int l = 0; l < cfg.backbone.num_layers; ++l) {
        for (int pr = 0; pr < 2; ++pr) {
            client.sink.buffers[static_cast<std::size_t>(l)][static_cast<std::size_t>(pr)].reseed(
                derive_seed(cfg.seed ^ kTagCapture, (std::uint64_t)client.client_id + 1,
                            (std::uint64_t)(task * 4096 + 2048), (std::uint64_t)(l * 2 + pr)));
        }
    }
    for (std::size_t start = 0; start < shard.size(); start += (std::size_t)cfg.round.batch_size) {
        std::size_t end = std::min(shard.size(), start + (std::size_t)cfg.round.batch_size);
        DenseMatrix batch(static_cast<int>(end - start), dataset.input_dim());
        for (std::size_t i = start; i < end; ++i)
            for (int j = 0; j < dataset.input_dim(); ++j)
                batch(static_cast<int>(i - start), j) = dataset.samples(shard[i], j);
        forward(client.replica, batch, &client.sink);
    }
}

// Collects A^k candidates from every client with captured activations and
// installs the aggregated next-task bases on the server.
void compute_next_a(ServerState& server, std::vector<ClientState>& clients,
                    const std::vector<std::vector<int>>& shards, const ExperimentConfig& cfg,
                    int task, bool bootstrap) {
    const int d = cfg.backbone.embed_dim;
    server.pending_a.clear();
    if (cfg.ablation.random_a) {
        for (int l = 0; l < cfg.backbone.num_layers; ++l) {
            server.pending_a.push_back(random_orthonormal_pair(
                d, cfg.rank,
                derive_seed(cfg.seed ^ kTagRandomA, (std::uint64_t)task + 1, (std::uint64_t)l)));
        }
        for (auto& c : clients) c.sink.clear();
        return;
    }
    MemoryConfig memory = cfg.memory;
    memory.rank = cfg.rank;
    std::vector<AdapterCandidates> all;
    std::vector<double> weights;
    for (auto& client : clients) {
        if (client.sink.buffers.empty() || client.sink.buffers[0][0].empty()) continue;
        all.push_back(client_next_a(client, memory, cfg.rank,
                                    bootstrap || cfg.ablation.no_memory_update));
        weights.push_back(
            static_cast<double>(shards[static_cast<std::size_t>(client.client_id)].size()));
    }
    if (all.empty()) throw ProtocolError("compute_next_a: no client produced candidates");
    if (!cfg.ablation.weighted_a_avg) weights.clear();
    for (int l = 0; l < cfg.backbone.num_layers; ++l) {
        std::array<DenseMatrix, 2> pair;
        for (int pr = 0; pr < 2; ++pr) {
            std::vector<DenseMatrix> cand;
            for (const auto& a : all)
                cand.push_back(a[static_cast<std::size_t>(l)][static_cast<std::size_t>(pr)]);
            pair[static_cast<std::size_t>(pr)] = aggregate_a(
                cand, weights,
                derive_seed(cfg.seed ^ kTagRepair, (std::uint64_t)task + 1,
                            (std::uint64_t)(l * 2 + pr)),
                &server.a_rank_repairs);
        }
        server.pending_a.push_back(std::move(pair));
    }
}

}  // namespace

TaskReport run_task(ServerState& server, std::vector<ClientState>& clients,
                    const Dataset& dataset, const TaskSchedule& schedule,
                    const PartitionPlan& plan, const ExperimentConfig& cfg, int task) {
    const auto& shards = plan.assignments[static_cast<std::size_t>(task)];
    std::vector<std::pair<DenseMatrix, DenseMatrix>> bases;
    for (const auto& pair : server.pending_a) bases.emplace_back(pair[0], pair[1]);
    server.global = begin_task(server.global, bases, schedule.classes_per_task());

    TaskReport report;
    report.task = task;
    const int repairs_before = server.a_rank_repairs;
    for (int round = 0; round < cfg.round.rounds_per_task; ++round) {
        auto selected = select_participants(
            cfg.round.num_clients, cfg.round.participation,
            derive_seed(cfg.seed ^ kTagSelect, (std::uint64_t)task + 1, (std::uint64_t)round + 1));
        broadcast(server, clients, selected);
        std::vector<ClientUpdate> updates;
        for (int id : selected) {
            const auto& shard = shards[static_cast<std::size_t>(id)];
            if (shard.empty()) continue;  // skip-client signal; weights renormalize
            updates.push_back(local_train(clients[static_cast<std::size_t>(id)], dataset, shard,
                                          schedule, cfg, task, round));
        }
        if (updates.empty()) throw ProtocolError("run_task: every selected client was empty");
        double total = 0.0, loss = 0.0;
        for (const auto& u : updates) {
            total += static_cast<double>(u.n_k);
            loss += static_cast<double>(u.n_k) * u.last_epoch_loss;
        }
        report.round_losses.push_back(loss / total);
        aggregate_b(server.global, updates, task * schedule.classes_per_task());
    }

    server.global = merge_current_task(server.global);
    // A_{t+1} is needed only when another task follows.
    if (task + 1 < schedule.num_tasks()) {
        compute_next_a(server, clients, shards, cfg, task + 1, false);
    } else {
        for (auto& c : clients) c.sink.clear();
    }
    report.accuracy_row = evaluate(server.global, dataset, schedule, task + 1);
    server.accuracy.append_row(report.accuracy_row);
    report.rank_repairs = server.a_rank_repairs - repairs_before;
    return report;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg_in) {
    auto t0 = std::chrono::steady_clock::now();
    ExperimentConfig cfg = cfg_in;
    cfg.validate();

    Dataset dataset;
    if (cfg.data_kind == "synthetic") {
        dataset = generate_synthetic(cfg.data);
    } else {
        dataset = ingest_raster(cfg.data_path,
                                cfg.data_kind == "idx" ? RasterFormat::IDX : RasterFormat::CSV,
                                cfg.labels_path);
        cfg.backbone.input_dim = dataset.input_dim();
        cfg.backbone.validate();
    }
    for (int c = 0; c < dataset.num_classes; ++c) {
        if (static_cast<int>(dataset.indices_of(Split::Train, c).size()) <
            2 * cfg.round.num_clients) {
            throw DataError("run_experiment: class " + std::to_string(c) +
                            " has fewer than 2K train samples");
        }
        if (dataset.indices_of(Split::Test, c).empty()) {
            throw DataError("run_experiment: class " + std::to_string(c) + " has no test samples");
        }
    }

    TaskSchedule schedule =
        build_schedule(dataset, cfg.num_tasks, derive_seed(cfg.seed, kTagSchedule));
    PartitionPlan plan =
        build_partition(dataset, schedule, cfg.round.num_clients, cfg.beta, cfg.seed);

    auto backbone = std::make_shared<Backbone>(
        init_backbone(cfg.backbone, derive_seed(cfg.seed, kTagBackbone)));
    const std::uint64_t frozen_checksum = backbone_checksum(*backbone);

    ServerState server;
    server.global = make_model(backbone);
    std::vector<ClientState> clients(static_cast<std::size_t>(cfg.round.num_clients));
    for (int k = 0; k < cfg.round.num_clients; ++k) {
        auto& c = clients[static_cast<std::size_t>(k)];
        c.client_id = k;
        c.sink = CaptureSink(cfg.backbone.num_layers, cfg.backbone.embed_dim,
                             cfg.memory.activation_cap, derive_seed(cfg.seed ^ kTagCapture,
                                                                    (std::uint64_t)k + 1));
        for (int l = 0; l < cfg.backbone.num_layers; ++l) {
            c.memories.push_back({memory_init(cfg.backbone.embed_dim),
                                  memory_init(cfg.backbone.embed_dim)});
        }
    }

    // Bootstrap A_1 from a forward-only calibration pass with empty memories.
    {
        std::vector<int> everyone(static_cast<std::size_t>(cfg.round.num_clients));
        std::iota(everyone.begin(), everyone.end(), 0);
        broadcast(server, clients, everyone);
        if (!cfg.ablation.random_a) {
            for (auto& c : clients) {
                const auto& shard = plan.assignments[0][static_cast<std::size_t>(c.client_id)];
                if (!shard.empty()) calibration_pass(c, dataset, shard, cfg, 0);
            }
        }
        compute_next_a(server, clients, plan.assignments[0], cfg, 0, true);
    }

    ExperimentResult result;
    result.config = cfg;
    result.experiment_seed = cfg.seed;
    for (int t = 0; t < cfg.num_tasks; ++t) {
        result.tasks.push_back(run_task(server, clients, dataset, schedule, plan, cfg, t));
    }
    if (backbone_checksum(*backbone) != frozen_checksum) {
        throw StateError("run_experiment: frozen backbone was mutated");
    }
    result.accuracy = server.accuracy;
    result.final_average_accuracy = faa(result.accuracy);

    CommConfig comm;
    comm.num_layers = cfg.backbone.num_layers;
    comm.embed_dim = cfg.backbone.embed_dim;
    comm.rank = cfg.rank;
    comm.num_clients = cfg.round.num_clients;
    comm.rounds_per_task = cfg.round.rounds_per_task;
    comm.num_tasks = cfg.num_tasks;
    comm.classes_per_task = schedule.classes_per_task();
    result.comm = comm_cost(comm);

    result.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

}  // namespace dolfin

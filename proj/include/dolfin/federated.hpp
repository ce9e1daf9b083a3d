#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "dolfin/config.hpp"
#include "dolfin/data.hpp"
#include "dolfin/metrics.hpp"
#include "dolfin/model.hpp"
#include "dolfin/subspace.hpp"

namespace dolfin {

// Per-task, per-client sample index lists.
struct PartitionPlan {
    double beta = 0.5;
    std::vector<std::vector<std::vector<int>>> assignments;  // [task][client]
};

// Class-wise Dirichlet assignment of sample positions to K clients; every
// position lands on exactly one client and no client is left empty.
std::vector<std::vector<int>> dirichlet_partition(const std::vector<int>& labels, int num_clients,
                                                  double beta, std::uint64_t seed);

// One plan row per task over the train split of that task's classes.
PartitionPlan build_partition(const Dataset& dataset, const TaskSchedule& schedule,
                              int num_clients, double beta, std::uint64_t seed);

// The only artifacts that cross the client -> server boundary.
struct ClientUpdate {
    int client_id = 0;
    std::vector<DenseMatrix> b_k;  // r x d per layer
    std::vector<DenseMatrix> b_v;
    DenseMatrix head_rows;  // current-task classes x d
    long long n_k = 0;
    double first_epoch_loss = 0.0;
    double last_epoch_loss = 0.0;
};

// A^k candidates, per layer x {key, value}.
using AdapterCandidates = std::vector<std::array<DenseMatrix, 2>>;

struct ClientState {
    int client_id = 0;
    ModelState replica;
    std::vector<std::array<SubspaceMemory, 2>> memories;  // [layer][projection]
    CaptureSink sink;
    bool has_replica = false;
};

struct ServerState {
    ModelState global;
    AccuracyMatrix accuracy;
    std::vector<std::array<DenseMatrix, 2>> pending_a;  // A_t for the next begin_task
    int a_rank_repairs = 0;
};

struct TaskReport {
    int task = 0;
    std::vector<double> round_losses;  // sample-weighted mean of client last-epoch losses
    std::vector<double> accuracy_row;
    int rank_repairs = 0;
};

struct ExperimentResult {
    ExperimentConfig config;
    std::vector<TaskReport> tasks;
    AccuracyMatrix accuracy;
    double final_average_accuracy = 0.0;
    CommLedger comm;
    std::uint64_t experiment_seed = 0;
    double wall_clock_seconds = 0.0;  // reported on the console, never in the file
};

// Deterministic per-round participant selection, returned sorted.
std::vector<int> select_participants(int num_clients, double participation, std::uint64_t seed);

// Bit-exact replica of the global model to every selected client.
void broadcast(const ServerState& server, std::vector<ClientState>& clients,
               const std::vector<int>& selected);

// E epochs of AdamW over the client's shard; activations are reservoir-sampled
// during the final epoch. Returns the trainable tensors and the shard size.
ClientUpdate local_train(ClientState& client, const Dataset& dataset,
                         const std::vector<int>& shard, const TaskSchedule& schedule,
                         const ExperimentConfig& cfg, int task, int round);

// n_k-weighted mean, summed in ascending client id order, installed into the
// global model's B matrices and current-task head rows.
void aggregate_b(ModelState& global, std::vector<ClientUpdate> updates, int head_row_lo);

// DualGPM step: update the client memory with the captured activations, then
// select the next interference-free basis. Buffers are cleared afterwards.
AdapterCandidates client_next_a(ClientState& client, const MemoryConfig& memory, int rank,
                                bool skip_memory_update);

// Unweighted (or n_k-weighted) elementwise mean of candidates followed by
// orthonormalization; rank-deficient columns are repaired from a seeded
// draw in the complement and counted.
DenseMatrix aggregate_a(const std::vector<DenseMatrix>& candidates,
                        const std::vector<double>& weights, std::uint64_t repair_seed,
                        int* repairs);

// One full task: rounds of broadcast/train/aggregate, merge, next-A
// computation, and evaluation of the global model on all tasks so far.
TaskReport run_task(ServerState& server, std::vector<ClientState>& clients,
                    const Dataset& dataset, const TaskSchedule& schedule,
                    const PartitionPlan& plan, const ExperimentConfig& cfg, int task);

ExperimentResult run_experiment(const ExperimentConfig& cfg);

}  // namespace dolfin

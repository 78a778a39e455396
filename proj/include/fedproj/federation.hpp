// Copyright 2026 The fedproj Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Round engines for projected (ferret), raw (fedavg) and zeroth-order
// (fedzo, fedkseed) federated training, client sampling, non-IID data
// partitioning and communication accounting.

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fedproj/models.hpp"
#include "fedproj/subspace.hpp"
#include "fedproj/zoo.hpp"

namespace fedproj {

enum class Method { kFerret, kFedAvg, kFedZO, kFedKSeed };
enum class AllocationPolicy { kUniform, kNormSqrt };
enum class SeedPolicy { kPerRound, kStatic };

const char* method_name(Method m);
Method parse_method(const std::string& name);
const char* allocation_name(AllocationPolicy p);
AllocationPolicy parse_allocation(const std::string& name);
const char* seed_policy_name(SeedPolicy p);
SeedPolicy parse_seed_policy(const std::string& name);

// Client data split. alpha is the Dirichlet concentration of label-skew.
struct DataSkew {
  enum class Kind { kIid, kLabelSkew } kind = Kind::kIid;
  double alpha = 1.0;

  std::string label() const;
};

// Block lane tags for seeds derived from the experiment root seed:
// derive_subseed(root, client, round, tag, index).
namespace seed_tag {
inline constexpr std::uint64_t kBasis = 0xb0;   // client message seed
inline constexpr std::uint64_t kData = 0xd0;    // mini-batch stream
inline constexpr std::uint64_t kSelect = 0x5e;  // client sampling (client 0)
inline constexpr std::uint64_t kZO = 0x20;      // fedzo step seeds, index = step
inline constexpr std::uint64_t kSplit = 0x5b;   // data partitioning
}  // namespace seed_tag

struct FedConfig {
  std::size_t num_clients = 1;
  std::size_t rounds = 1;
  LocalConfig local;  // iters = T, lr = eta
  std::size_t total_bases = 1;  // K
  double server_lr = 1.0;
  double participation = 1.0;
  Method method = Method::kFerret;
  DataSkew skew;
  std::size_t max_block_dim = 0;  // split parameter groups larger than this
  AllocationPolicy allocation = AllocationPolicy::kUniform;
  SeedPolicy seed_policy = SeedPolicy::kPerRound;
  RandomSeed root_seed;
  bool exact_projection = false;  // ferret: least-squares coordinates
  double zo_epsilon = 0.1;
  std::size_t threads = 1;  // concurrent clients per round, in-process mode
  bool timing = false;      // record wall times (otherwise zero)

  // N >= 1, T >= 1, K >= 1, 0 < participation <= 1, finite rates. R = 0 is
  // accepted as an empty run.
  void validate() const;
  std::size_t clients_per_round() const;
};

struct ClientDataset {
  std::uint32_t client_id = 0;
  Dataset examples;
  std::string skew_label;
};

// iid: seeded shuffle then near-equal contiguous shares. label-skew: per
// class, client proportions ~ Dirichlet(alpha); redrawn until every client
// is non-empty. Throws kPartition when |full| < N or no draw succeeds.
std::vector<ClientDataset> partition_data(const Dataset& full, std::size_t n,
                                          const DataSkew& skew, RandomSeed seed);

struct ClientUpdateMsg {
  std::uint32_t client_id = 0;
  std::uint32_t round = 0;
  std::variant<ProjectedUpdate, ScalarGrads, std::vector<double>> payload;
  std::uint64_t upload_units = 0;  // numbers on the wire: seed + coords, or d
  std::uint64_t grad_evals = 0;

  bool operator==(const ClientUpdateMsg&) const = default;
};

// Tag and body of a ClientUpdateMsg frame; see docs/PROTOCOL.md.
std::uint8_t client_update_tag(const ClientUpdateMsg& msg);
std::vector<std::uint8_t> encode_client_update(const ClientUpdateMsg& msg);
ClientUpdateMsg decode_client_update(std::uint8_t tag,
                                     std::span<const std::uint8_t> body);

struct RoundRecord {
  std::size_t round = 0;
  double global_loss = 0.0;
  double eval_metric = 0.0;
  std::uint64_t cumulative_upload = 0;
  std::uint64_t cumulative_grad_evals = 0;
  double local_seconds = 0.0;
  double aggregate_seconds = 0.0;
  std::uint64_t cumulative_download = 0;

  bool operator==(const RoundRecord&) const = default;
};

struct ExperimentData {
  std::vector<ClientDataset> clients;
  Dataset eval;  // held-out set for global loss/metric
};

// Everything fixed for the lifetime of one experiment.
class Federation {
 public:
  Federation(FedConfig cfg, ModelSpec spec, ExperimentData data);

  const FedConfig& config() const noexcept { return cfg_; }
  const ModelSpec& model() const noexcept { return spec_; }
  const ExperimentData& data() const noexcept { return data_; }
  // Shared block layout; budgets set by the allocation policy (ferret only).
  const BlockPartition& partition() const noexcept { return partition_; }
  std::size_t dim() const noexcept { return dim_; }

  // Sampled client ids for a round, ascending.
  std::vector<std::uint32_t> sample_clients(std::size_t round) const;

  RandomSeed message_seed(std::uint32_t client, std::size_t round) const;
  RandomSeed data_seed(std::uint32_t client, std::size_t round) const;

  // Local work of one client starting from the global model w.
  ClientUpdateMsg client_update(std::uint32_t client, std::size_t round,
                                std::span<const double> w) const;

  // Server-side reconstruction of one client's update.
  std::vector<double> decode_update(const ClientUpdateMsg& msg,
                                    std::span<const double> w) const;

  // w - server_lr * mean of decoded updates, summed in ascending client id.
  std::vector<double> aggregate(std::span<const double> w,
                                std::vector<ClientUpdateMsg> msgs) const;

  // Per-round download under the cached-model assumption.
  std::uint64_t download_units(std::size_t n_sampled) const;

 private:
  ClientUpdateMsg ferret_client(std::uint32_t client, std::size_t round,
                                std::span<const double> w) const;
  ClientUpdateMsg fedavg_client(std::uint32_t client, std::size_t round,
                                std::span<const double> w) const;
  ClientUpdateMsg fedzo_client(std::uint32_t client, std::size_t round,
                               std::span<const double> w) const;
  ClientUpdateMsg fedkseed_client(std::uint32_t client, std::size_t round,
                                  std::span<const double> w) const;

  FedConfig cfg_;
  ModelSpec spec_;
  ExperimentData data_;
  std::size_t dim_ = 0;
  BlockPartition partition_;
};

// Runs the sampled clients' local work for a round.
class ClientExecutor {
 public:
  virtual ~ClientExecutor() = default;
  virtual std::vector<ClientUpdateMsg> run(const Federation& fed,
                                           std::size_t round,
                                           std::span<const double> w,
                                           std::span<const std::uint32_t> clients) = 0;
};

// Same-process execution, cfg.threads clients at a time.
class InProcessExecutor final : public ClientExecutor {
 public:
  std::vector<ClientUpdateMsg> run(const Federation& fed, std::size_t round,
                                   std::span<const double> w,
                                   std::span<const std::uint32_t> clients) override;
};

// Forked worker processes exchanging length-prefixed frames with the server
// over AF_UNIX socket pairs. Workers inherit the federation at fork time.
class SocketExecutor final : public ClientExecutor {
 public:
  SocketExecutor(const Federation& fed, std::size_t workers);
  ~SocketExecutor() override;
  SocketExecutor(const SocketExecutor&) = delete;
  SocketExecutor& operator=(const SocketExecutor&) = delete;

  std::vector<ClientUpdateMsg> run(const Federation& fed, std::size_t round,
                                   std::span<const double> w,
                                   std::span<const std::uint32_t> clients) override;

 private:
  struct Worker {
    int fd = -1;
    int pid = -1;
  };
  const Federation* fed_;
  std::vector<Worker> workers_;
};

struct RoundResult {
  std::vector<double> w;
  RoundRecord record;
  std::vector<ClientUpdateMsg> msgs;
};

// One round of cfg.method from global model w. `prev` carries the
// cumulative counters (zero for the first round).
RoundResult run_round(const Federation& fed, ClientExecutor& exec,
                      std::span<const double> w, std::size_t round,
                      const RoundRecord& prev);

// Method-checked wrappers (in-process).
RoundResult ferret_round(const Federation& fed, std::span<const double> w,
                         std::size_t round, const RoundRecord& prev = {});
RoundResult fedavg_round(const Federation& fed, std::span<const double> w,
                         std::size_t round, const RoundRecord& prev = {});

struct ExperimentResult {
  std::vector<RoundRecord> records;
  std::vector<double> w;
};

// R rounds from w0 (init_params when empty). Errors are rethrown with the
// round index as context.
ExperimentResult run_experiment(const Federation& fed, ClientExecutor& exec,
                                std::vector<double> w0 = {});
ExperimentResult run_experiment(const Federation& fed,
                                std::vector<double> w0 = {});

struct CostSummary {
  std::string method;
  std::size_t rounds = 0;
  std::size_t clients_per_round = 0;
  std::uint64_t dim = 0;
  std::uint64_t total_upload = 0;
  std::uint64_t total_download = 0;
  std::uint64_t total_grad_evals = 0;
  double upload_per_round = 0.0;             // all sampled clients
  double upload_per_client_round = 0.0;
  double download_per_round = 0.0;
  double grad_evals_per_round = 0.0;
  double local_seconds = 0.0;
  double aggregate_seconds = 0.0;
};

CostSummary account_costs(const Federation& fed,
                          std::span<const RoundRecord> records);

}  // namespace fedproj

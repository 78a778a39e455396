// Copyright 2026 The fedproj Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>

#include <json.hpp>

#include "fedproj/bench.hpp"
#include "fedproj/error.hpp"
#include "fedproj/wire.hpp"

namespace fedproj::bench {

namespace {

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string hex64(std::uint64_t x) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "0x%016" PRIx64, x);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write '" + path + "'");
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "write failed for '" + path + "'");
}

}  // namespace

std::string records_csv(std::span<const RoundRecord> records) {
  std::string out =
      "round,loss,metric,cumulative_upload,cumulative_grad_evals,local_seconds,"
      "aggregate_seconds,cumulative_download\n";
  for (const auto& r : records) {
    out += std::to_string(r.round) + "," + fmt_double(r.global_loss) + "," +
           fmt_double(r.eval_metric) + "," + std::to_string(r.cumulative_upload) + "," +
           std::to_string(r.cumulative_grad_evals) + "," + fmt_double(r.local_seconds) + "," +
           fmt_double(r.aggregate_seconds) + "," + std::to_string(r.cumulative_download) + "\n";
  }
  return out;
}

std::string summary_json(const ExperimentConfig& cfg, const CostSummary& s,
                         std::span<const RoundRecord> records) {
  nlohmann::ordered_json j;
  j["method"] = s.method;
  j["model"] = model_kind_name(cfg.model.kind);
  j["dim"] = s.dim;
  j["total_bases"] = cfg.fed.total_bases;
  j["rounds"] = s.rounds;
  j["num_clients"] = cfg.fed.num_clients;
  j["clients_per_round"] = s.clients_per_round;
  j["root_seed"] = cfg.fed.root_seed.value;
  j["total_upload"] = s.total_upload;
  j["total_download"] = s.total_download;
  j["total_grad_evals"] = s.total_grad_evals;
  j["upload_per_round"] = s.upload_per_round;
  j["upload_per_client_round"] = s.upload_per_client_round;
  j["upload_ratio_vs_dense"] =
      s.dim == 0 ? 0.0 : s.upload_per_client_round / static_cast<double>(s.dim);
  j["download_per_round"] = s.download_per_round;
  j["grad_evals_per_round"] = s.grad_evals_per_round;
  j["local_seconds"] = s.local_seconds;
  j["aggregate_seconds"] = s.aggregate_seconds;
  if (records.empty()) {
    j["final_loss"] = nullptr;
    j["final_metric"] = nullptr;
  } else {
    j["final_loss"] = records.back().global_loss;
    j["final_metric"] = records.back().eval_metric;
  }
  return j.dump(2) + "\n";
}

RunOutput execute(const ExperimentConfig& cfg) {
  const Federation fed(cfg.fed, cfg.model, build_data(cfg));
  std::unique_ptr<ClientExecutor> exec;
  if (cfg.transport == "socket") {
    exec = std::make_unique<SocketExecutor>(fed, cfg.workers);
  } else {
    exec = std::make_unique<InProcessExecutor>();
  }
  RunOutput out;
  out.result = run_experiment(fed, *exec);
  out.summary = account_costs(fed, out.result.records);
  out.csv = records_csv(out.result.records);
  out.json = summary_json(cfg, out.summary, out.result.records);
  return out;
}

void write_outputs(const ExperimentConfig& cfg, const RunOutput& out) {
  if (!cfg.output.records_csv.empty()) write_text(cfg.output.records_csv, out.csv);
  if (!cfg.output.summary_json.empty()) write_text(cfg.output.summary_json, out.json);
}

std::string Series::csv() const {
  std::string out;
  for (std::size_t i = 0; i < columns.size(); ++i) {
    out += (i == 0 ? "" : ",") + columns[i];
  }
  out += "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      out += (i == 0 ? "" : ",") + fmt_double(row[i]);
    }
    out += "\n";
  }
  return out;
}

std::size_t rounds_to_reach(std::span<const double> losses, double threshold) {
  for (std::size_t r = 0; r < losses.size(); ++r) {
    if (losses[r] <= threshold) return r + 1;
  }
  return 0;
}

std::string protocol_dump() {
  std::string out;
  auto line = [&](const std::string& key, const std::string& value) {
    out += key + " = " + value + "\n";
  };
  line("seed_derivation_version", std::to_string(prng::kSeedDerivationVersion));
  line("golden", hex64(prng::kGolden));
  line("root_salt", hex64(prng::kRootSalt));
  line("lane_salt.client", hex64(prng::kLaneSalt[0]));
  line("lane_salt.round", hex64(prng::kLaneSalt[1]));
  line("lane_salt.block", hex64(prng::kLaneSalt[2]));
  line("lane_salt.basis_index", hex64(prng::kLaneSalt[3]));
  line("mix64", "z ^= z >> 30; z *= 0xbf58476d1ce4e5b9; z ^= z >> 27; z *= 0x94d049bb133111eb; z ^= z >> 31");
  line("derive_subseed",
       "h = mix64(root ^ root_salt); for j in 0..3: h = mix64((h + golden) ^ mix64(field_j + lane_salt_j))");
  line("chunk_key", "derive_subseed(message_seed, 0, 0, block, basis_index)");
  line("stream_bits(key, i)", "mix64(key + (i + 1) * golden)");
  line("stream_uniform(key, i)", "((stream_bits(key, i) >> 11) + 0.5) * 2^-53");
  line("basis_entry",
       "clamp(float(ppf_centered((2u - 1) * erf(a / sqrt2) / 2)), -float(a), float(a)), a = 1/sqrt(d_l)");
  line("ppf_centered", "AS 241 central branch, q * A(r) / B(r), r = 0.180625 - q^2");
  line("rho", "1 - 2 a psi(a) / (2 Phi(a) - 1)");
  line("coords", "gamma_lk = <v_lk, delta_l> / (rho_l K_l), stored as f32");
  line("reconstruct", "delta_l = sum_k gamma_lk v_lk, ascending k, f64 accumulation");
  line("seed_tag.basis", hex64(seed_tag::kBasis));
  line("seed_tag.data", hex64(seed_tag::kData));
  line("seed_tag.select", hex64(seed_tag::kSelect));
  line("seed_tag.zo", hex64(seed_tag::kZO));
  line("seed_tag.split", hex64(seed_tag::kSplit));
  line("frame", "u32 LE length(tag + payload) | u8 tag | payload");
  line("max_frame_bytes", std::to_string(kMaxFrameBytes));
  line("tag.projected_update", "0x01");
  line("tag.scalar_grads", "0x02");
  line("tag.raw_update", "0x03");
  line("tag.round_start", "0x10");
  line("tag.shutdown", "0x11");
  line("tag.error", "0x12");
  line("projected_update",
       "u8 version | u32 partition_id | u64 seed | u32 num_blocks | per block: u32 count, count x f32");
  line("scalar_grads", "projected_update layout, partition_id 0, one block");
  line("raw_update", "u64 count | count x f64");
  line("client_update",
       "u32 client_id | u32 round | u64 upload_units | u64 grad_evals | payload body");
  line("round_start", "u32 round | u32 client | raw_update(w)");
  line("error", "u8 code | u32 length | message bytes");
  return out;
}

}  // namespace fedproj::bench

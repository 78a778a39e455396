// Copyright 2026 The fedproj Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "fedproj/error.hpp"
#include "fedproj/federation.hpp"
#include "fedproj/wire.hpp"

namespace fedproj {

std::uint8_t client_update_tag(const ClientUpdateMsg& msg) {
  switch (msg.payload.index()) {
    case 0: return static_cast<std::uint8_t>(MessageTag::kProjectedUpdate);
    case 1: return static_cast<std::uint8_t>(MessageTag::kScalarGrads);
    default: return static_cast<std::uint8_t>(MessageTag::kRawUpdate);
  }
}

std::vector<std::uint8_t> encode_client_update(const ClientUpdateMsg& msg) {
  ByteWriter w;
  w.u32(msg.client_id);
  w.u32(msg.round);
  w.u64(msg.upload_units);
  w.u64(msg.grad_evals);
  if (const auto* p = std::get_if<ProjectedUpdate>(&msg.payload)) {
    write_projected_update(w, *p);
  } else if (const auto* g = std::get_if<ScalarGrads>(&msg.payload)) {
    write_scalar_grads(w, *g);
  } else {
    write_raw_update(w, std::get<std::vector<double>>(msg.payload));
  }
  return w.take();
}

ClientUpdateMsg decode_client_update(std::uint8_t tag, std::span<const std::uint8_t> body) {
  ByteReader r(body);
  ClientUpdateMsg msg;
  msg.client_id = r.u32();
  msg.round = r.u32();
  msg.upload_units = r.u64();
  msg.grad_evals = r.u64();
  switch (static_cast<MessageTag>(tag)) {
    case MessageTag::kProjectedUpdate: msg.payload = read_projected_update(r); break;
    case MessageTag::kScalarGrads: msg.payload = read_scalar_grads(r); break;
    case MessageTag::kRawUpdate: msg.payload = read_raw_update(r); break;
    default:
      throw Error(ErrorCode::kProtocol, "tag " + std::to_string(tag) + " is not a client update");
  }
  r.expect_end();
  return msg;
}

namespace {

// RoundStart: round u32 | client u32 | d u64 | d x f64
Bytes encode_round_start(std::size_t round, std::uint32_t client, std::span<const double> w) {
  ByteWriter b;
  b.u32(static_cast<std::uint32_t>(round));
  b.u32(client);
  write_raw_update(b, w);
  return b.take();
}

// Error: code u8 | message str
Bytes encode_error(const Error& e) {
  ByteWriter b;
  b.u8(static_cast<std::uint8_t>(e.code()));
  b.str(e.what());
  return b.take();
}

[[noreturn]] void worker_main(const Federation& fed, int fd) {
  int status = 0;
  try {
    Frame f;
    while (read_frame(fd, f)) {
      if (f.tag == MessageTag::kShutdown) break;
      if (f.tag != MessageTag::kRoundStart) throw Error(ErrorCode::kProtocol, "unexpected frame");
      ByteReader r(f.payload);
      const std::size_t round = r.u32();
      const std::uint32_t client = r.u32();
      const std::vector<double> w = read_raw_update(r);
      r.expect_end();
      try {
        const ClientUpdateMsg msg = fed.client_update(client, round, w);
        write_frame(fd, static_cast<MessageTag>(client_update_tag(msg)),
                    encode_client_update(msg));
      } catch (const Error& e) {
        write_frame(fd, MessageTag::kError, encode_error(e));
      }
    }
  } catch (...) {
    status = 1;
  }
  ::close(fd);
  ::_exit(status);
}

}  // namespace

SocketExecutor::SocketExecutor(const Federation& fed, std::size_t workers) : fed_(&fed) {
  if (workers == 0) throw Error(ErrorCode::kConfig, "need at least one worker process");
  for (std::size_t i = 0; i < workers; ++i) {
    int fds[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0) {
      throw Error(ErrorCode::kIo, std::string("socketpair: ") + std::strerror(errno));
    }
    const pid_t pid = ::fork();
    if (pid < 0) {
      ::close(fds[0]);
      ::close(fds[1]);
      throw Error(ErrorCode::kIo, std::string("fork: ") + std::strerror(errno));
    }
    if (pid == 0) {
      ::close(fds[0]);
      for (const Worker& w : workers_) ::close(w.fd);
      worker_main(fed, fds[1]);
    }
    ::close(fds[1]);
    workers_.push_back(Worker{fds[0], pid});
  }
}

SocketExecutor::~SocketExecutor() {
  for (Worker& w : workers_) {
    try {
      write_frame(w.fd, MessageTag::kShutdown, {});
    } catch (...) {
    }
    ::close(w.fd);
    int status;
    ::waitpid(w.pid, &status, 0);
  }
}

std::vector<ClientUpdateMsg> SocketExecutor::run(const Federation& fed, std::size_t round,
                                                 std::span<const double> w,
                                                 std::span<const std::uint32_t> clients) {
  if (&fed != fed_) throw Error(ErrorCode::kConfig, "executor bound to another federation");
  const std::size_t nw = workers_.size();
  // Client i goes to worker i % nw. One request in flight per worker, so
  // neither side can block on a full socket buffer.
  std::vector<ClientUpdateMsg> out(clients.size());
  auto send = [&](std::size_t i) {
    write_frame(workers_[i % nw].fd, MessageTag::kRoundStart,
                encode_round_start(round, clients[i], w));
  };
  for (std::size_t i = 0; i < std::min(nw, clients.size()); ++i) send(i);
  std::optional<Error> first_error;
  for (std::size_t i = 0; i < clients.size(); ++i) {
    Frame f;
    if (!read_frame(workers_[i % nw].fd, f)) {
      throw Error(ErrorCode::kIo, "worker process exited");
    }
    if (f.tag == MessageTag::kError) {
      ByteReader r(f.payload);
      const auto code = static_cast<ErrorCode>(r.u8());
      if (!first_error) first_error = Error(code, r.str());
    } else {
      out[i] = decode_client_update(static_cast<std::uint8_t>(f.tag), f.payload);
      if (out[i].client_id != clients[i] || out[i].round != round) {
        throw Error(ErrorCode::kProtocol, "worker answered for the wrong client or round");
      }
    }
    if (i + nw < clients.size()) send(i + nw);
  }
  if (first_error) throw *first_error;
  return out;
}

}  // namespace fedproj

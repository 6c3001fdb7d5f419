#pragma once

// Plain-text interchange:
//   events CSV      header `node,id,time`, 1-based node ids, times sorted per node
//   covariates CSV  header `segment_start,node,x1,...,xp`
// Values are printed with 17 significant digits so decimal round-trips are exact.

#include <cstdint>
#include <string>

#include "hawkesnet/model.hpp"

namespace hawkesnet {

std::string format_double(double x);  // %.17g

void write_event_log(const EventLog& events, const std::string& path);

/// `n_nodes` covers nodes with no events (0 = infer from max id seen);
/// `horizon` is T (required: the CSV does not carry it).
EventLog read_event_log(const std::string& path, double horizon, int n_nodes = 0);

void write_covariates(const CovariateField& field, const std::string& path);

/// `horizon` closes the last segment; 0 = extrapolate the final segment
/// to the same width as the previous one.
CovariateField read_covariates(const std::string& path, double horizon = 0.0);

/// FNV-1a 64-bit digest of a byte string / file, hex-encoded.
std::uint64_t fnv1a64(const std::string& bytes);
std::string digest_hex(const std::string& bytes);
std::string digest_file(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace hawkesnet

#pragma once

#include <string>

#include "calvid/codec.hpp"
#include "calvid/denoiser.hpp"
#include "calvid/probe.hpp"

namespace calvid {

/// Checkpoints are a JSON header (<prefix>.json: kind, architecture,
/// schedule, seed, step count, tensor index) plus CC3T weight blobs
/// concatenated in <prefix>.bin.
void save_codec(const std::string& prefix, const CodecParams& codec);
CodecParams load_codec(const std::string& prefix);

void save_denoiser(const std::string& prefix, const Denoiser& model);
Denoiser load_denoiser(const std::string& prefix);

void save_probe(const std::string& prefix, const ProbeHead& head);
ProbeHead load_probe(const std::string& prefix);

}  // namespace calvid

#pragma once

#include "hemgs/agnostic.hpp"
#include "hemgs/model.hpp"
#include "hemgs/scene.hpp"

namespace hemgs {

// Per-component storage accounting of one bitstream. SCOF holds scaling and
// offsets in a single entropy-coded section; their individual shares are
// estimated from the per-element rate attribution recorded at encode time.
struct StorageReport {
  std::uint64_t anchor_count = 0;
  double lambda = 0;
  std::uint64_t location_bytes = 0;
  std::uint64_t feature_bytes = 0;
  double scaling_bytes = 0;   // estimated share of the SCOF section
  double offsets_bytes = 0;   // estimated share of the SCOF section
  std::uint64_t side_bytes = 0;
  std::uint64_t overhead_bytes = 0;  // header + section table + checksums
  std::uint64_t total_bytes = 0;
  double bits_per_anchor = 0;
  // Rate-estimate bookkeeping recorded at encode time.
  double est_feat_coder_bits = 0;   // sum of -log2(freq/2^16) in FEAT
  double est_feat_model_bits = 0;   // sum of -log2 p under the model
  double est_scof_coder_bits = 0;
  double est_scof_model_bits = 0;
  std::uint64_t escape_count = 0;

  double others_bytes() const { return double(side_bytes + overhead_bytes); }
};

// Progressive compression: raw 16-bit locations in coding order, then
// entropy-coded features, then entropy-coded scaling+offsets, then the
// serialized scene-specific parameters (SIDE). The model is rounded through
// its f32 serialization before use so the decoder reproduces every
// prediction bit-exactly.
// Optional per-element encode trace (quantization-contract audits): parallel
// vectors over every coded element, in coding order, FEAT then SCOF per anchor.
struct CodecTrace {
  std::vector<double> step, original, dequantized;
};

Bytes compress(const AnchorScene& scene, const HemgsModel& model, RateLambda lambda,
               const AgnosticExtractor& extractor, CodecTrace* trace = nullptr);

// Exact inverse of the lossless stage. Returns the quantized scene: anchors
// in coding order, dequantized locations and attributes. Throws DecodeError /
// ChecksumError / DigestError on malformed input.
AnchorScene decompress(const Bytes& bits, const AgnosticExtractor& extractor);

StorageReport inspect(const Bytes& bits);

}  // namespace hemgs

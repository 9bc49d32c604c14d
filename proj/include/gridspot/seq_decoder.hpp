#pragma once

#include <string>

#include "gridspot/params.hpp"
#include "gridspot/tensor.hpp"

namespace gridspot {

// Ordered symbol list plus the implicit EOS symbol at the last index.
class CharDictionary {
 public:
  static CharDictionary from_symbols(const std::string& symbols);
  static CharDictionary digits4();  // 10 digits + ABCD, M = 15
  static CharDictionary full69();   // 26 letters + 10 digits + 32 punctuation

  int size() const { return static_cast<int>(symbols_.size()) + 1; }
  int eos_index() const { return static_cast<int>(symbols_.size()); }
  int index_of(char c) const;  // DataError naming the character if unknown
  char symbol(int index) const;
  const std::string& symbols() const { return symbols_; }

 private:
  std::string symbols_;
};

struct DecoderConfig {
  int in_channels = 16;  // C
  int hidden = 32;       // D
  int num_classes = 15;  // M
  int layers = 2;
};

// Two stacked bidirectional LSTM layers followed by a shared linear
// classifier over the 2D concatenated states.
struct DecoderParams {
  struct Cell {
    Tensor wx;  // [in, 4D], gate order i,f,g,o
    Tensor wh;  // [D, 4D]
    Tensor b;   // [4D]
  };
  DecoderConfig cfg;
  std::vector<Cell> fwd, bwd;  // one per layer
  Tensor fc_w;                 // [2D, M]
  Tensor fc_b;                 // [M]

  static DecoderParams init(const DecoderConfig& cfg, std::mt19937_64& rng);
  void register_params(ParamMap& out) const;
};

// Spatially weighted pooling of x by per-character attention:
// a = sigmoid(cma_logits), optionally normalized per row by its spatial
// sum (+eps); output [N, L, C].
Tensor attention_fuse(const Tensor& cma_logits, const Tensor& x, int L,
                      bool normalize = true, double eps = 1e-6);

// [N, L, C] -> per-position class logits [N, L, M]. Instances are
// independent rows of the batch.
Tensor decode(const Tensor& x_seq, const DecoderParams& params);

// Transcript indices padded with EOS to length L.
std::vector<int> targets_from_transcript(const std::string& transcript,
                                         const CharDictionary& dict, int L);

}  // namespace gridspot

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace mad {

enum class TaskKind { Detection = 0, Segmentation = 1, Keypoint = 2, Captioning = 3 };

constexpr const char* task_name(TaskKind t) {
  switch (t) {
    case TaskKind::Detection: return "detection";
    case TaskKind::Segmentation: return "segmentation";
    case TaskKind::Keypoint: return "keypoint";
    case TaskKind::Captioning: return "captioning";
  }
  return "?";
}

enum class TokenKind { Pad, Mask, Prompt, Coord, Class, Special, Word };

// Indices into the SPECIAL range.
enum SpecialToken { kForeground = 0, kBackground = 1, kVisible = 2, kInvisible = 3 };

struct VocabSpec {
  int num_bins = 500;
  int num_classes = 5;
  std::vector<std::string> words;

  void validate() const;  // throws std::invalid_argument
};

// Unified token space. Ranges are contiguous and laid out in a fixed order so
// ids are stable across runs: PAD, MASK, PROMPT(4), COORD, CLASS(+noise),
// SPECIAL(4), WORD.
class Vocab {
 public:
  static Vocab build(const VocabSpec& spec);

  int total_size() const { return total_size_; }
  int num_bins() const { return spec_.num_bins; }
  int num_classes() const { return spec_.num_classes; }
  const std::vector<std::string>& words() const { return spec_.words; }

  int pad() const { return 0; }
  int mask() const { return 1; }
  int prompt(TaskKind t) const { return prompt_begin_ + static_cast<int>(t); }
  int coord(int bin) const;
  int cls(int class_id) const;
  int noise_class() const { return class_begin_ + spec_.num_classes; }
  int special(SpecialToken s) const { return special_begin_ + static_cast<int>(s); }
  int word(int index) const;
  int word_id(const std::string& w) const;  // -1 if unknown

  int coord_begin() const { return coord_begin_; }
  int class_begin() const { return class_begin_; }
  int special_begin() const { return special_begin_; }
  int word_begin() const { return word_begin_; }

  struct Classified {
    TokenKind kind;
    int index;  // offset within the range
  };
  Classified classify(int id) const;
  int reindex(TokenKind kind, int index) const;  // inverse of classify

  bool is_coord(int id) const { return id >= coord_begin_ && id < class_begin_; }
  bool is_class(int id) const { return id >= class_begin_ && id < special_begin_; }
  bool is_word(int id) const { return id >= word_begin_ && id < total_size_; }

  // Token ids a task may emit as supervision targets.
  std::vector<int> task_filter(TaskKind t) const;

  // Versioned text manifest; hash is over the manifest bytes (FNV-1a 64).
  std::string manifest() const;
  uint64_t manifest_hash() const;
  static Vocab from_manifest(std::istream& in);

 private:
  VocabSpec spec_;
  int prompt_begin_ = 2;
  int coord_begin_ = 0;
  int class_begin_ = 0;
  int special_begin_ = 0;
  int word_begin_ = 0;
  int total_size_ = 0;
};

// clamp(floor(v * num_bins), 0, num_bins - 1); v clamped to [0,1] first.
int quantize_coord(double v, int num_bins);
// Bin-center convention: (bin + 0.5) / num_bins.
double dequantize_coord(int bin, int num_bins);

}  // namespace mad

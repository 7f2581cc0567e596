#include "mad/vocab.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace mad {

void VocabSpec::validate() const {
  if (num_bins < 2) throw std::invalid_argument("num_bins must be >= 2");
  if (num_classes < 1) throw std::invalid_argument("num_classes must be >= 1");
  std::set<std::string> uniq(words.begin(), words.end());
  if (uniq.size() != words.size())
    throw std::invalid_argument("duplicate word strings in vocabulary");
}

Vocab Vocab::build(const VocabSpec& spec) {
  spec.validate();
  Vocab v;
  v.spec_ = spec;
  v.prompt_begin_ = 2;
  v.coord_begin_ = v.prompt_begin_ + 4;
  v.class_begin_ = v.coord_begin_ + spec.num_bins;
  v.special_begin_ = v.class_begin_ + spec.num_classes + 1;  // +1 noise class
  v.word_begin_ = v.special_begin_ + 4;
  v.total_size_ = v.word_begin_ + static_cast<int>(spec.words.size());
  return v;
}

int Vocab::coord(int bin) const {
  if (bin < 0 || bin >= spec_.num_bins) throw std::out_of_range("coord bin out of range");
  return coord_begin_ + bin;
}

int Vocab::cls(int class_id) const {
  if (class_id < 0 || class_id > spec_.num_classes)
    throw std::out_of_range("class id out of range");
  return class_begin_ + class_id;
}

int Vocab::word(int index) const {
  if (index < 0 || index >= static_cast<int>(spec_.words.size()))
    throw std::out_of_range("word index out of range");
  return word_begin_ + index;
}

int Vocab::word_id(const std::string& w) const {
  auto it = std::find(spec_.words.begin(), spec_.words.end(), w);
  if (it == spec_.words.end()) return -1;
  return word_begin_ + static_cast<int>(it - spec_.words.begin());
}

Vocab::Classified Vocab::classify(int id) const {
  if (id < 0 || id >= total_size_) throw std::out_of_range("token id out of range");
  if (id == 0) return {TokenKind::Pad, 0};
  if (id == 1) return {TokenKind::Mask, 0};
  if (id < coord_begin_) return {TokenKind::Prompt, id - prompt_begin_};
  if (id < class_begin_) return {TokenKind::Coord, id - coord_begin_};
  if (id < special_begin_) return {TokenKind::Class, id - class_begin_};
  if (id < word_begin_) return {TokenKind::Special, id - special_begin_};
  return {TokenKind::Word, id - word_begin_};
}

int Vocab::reindex(TokenKind kind, int index) const {
  switch (kind) {
    case TokenKind::Pad: return 0;
    case TokenKind::Mask: return 1;
    case TokenKind::Prompt: return prompt_begin_ + index;
    case TokenKind::Coord: return coord_begin_ + index;
    case TokenKind::Class: return class_begin_ + index;
    case TokenKind::Special: return special_begin_ + index;
    case TokenKind::Word: return word_begin_ + index;
  }
  throw std::logic_error("bad token kind");
}

std::vector<int> Vocab::task_filter(TaskKind t) const {
  std::vector<int> ids;
  switch (t) {
    case TaskKind::Detection:
      for (int b = 0; b < spec_.num_bins; ++b) ids.push_back(coord(b));
      for (int c = 0; c <= spec_.num_classes; ++c) ids.push_back(cls(c));
      break;
    case TaskKind::Segmentation:
      ids.push_back(special(kForeground));
      ids.push_back(special(kBackground));
      break;
    case TaskKind::Keypoint:
      for (int b = 0; b < spec_.num_bins; ++b) ids.push_back(coord(b));
      ids.push_back(special(kVisible));
      ids.push_back(special(kInvisible));
      break;
    case TaskKind::Captioning:
      for (size_t w = 0; w < spec_.words.size(); ++w) ids.push_back(word(static_cast<int>(w)));
      ids.push_back(pad());
      break;
  }
  return ids;
}

std::string Vocab::manifest() const {
  std::ostringstream os;
  os << "mad-vocab v1\n";
  os << "range PAD 0 1\n";
  os << "range MASK 1 1\n";
  os << "range PROMPT " << prompt_begin_ << " 4\n";
  os << "range COORD " << coord_begin_ << " " << spec_.num_bins << "\n";
  os << "range CLASS " << class_begin_ << " " << spec_.num_classes + 1 << "\n";
  os << "range SPECIAL " << special_begin_ << " 4\n";
  os << "range WORD " << word_begin_ << " " << spec_.words.size() << "\n";
  for (const auto& w : spec_.words) os << "word " << w << "\n";
  return os.str();
}

uint64_t Vocab::manifest_hash() const {
  const std::string m = manifest();
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : m) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

Vocab Vocab::from_manifest(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "mad-vocab v1")
    throw std::runtime_error("bad vocabulary manifest header");
  VocabSpec spec;
  spec.words.clear();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "range") {
      std::string name;
      long start = 0, size = 0;
      ls >> name >> start >> size;
      if (name == "COORD") spec.num_bins = static_cast<int>(size);
      if (name == "CLASS") spec.num_classes = static_cast<int>(size) - 1;
    } else if (tag == "word") {
      std::string w;
      ls >> w;
      spec.words.push_back(w);
    } else {
      throw std::runtime_error("bad manifest line: " + line);
    }
  }
  return build(spec);
}

int quantize_coord(double v, int num_bins) {
  if (!std::isfinite(v)) throw std::invalid_argument("non-finite coordinate");
  v = std::clamp(v, 0.0, 1.0);
  int bin = static_cast<int>(std::floor(v * num_bins));
  return std::clamp(bin, 0, num_bins - 1);
}

double dequantize_coord(int bin, int num_bins) {
  if (bin < 0 || bin >= num_bins) throw std::out_of_range("bin out of range");
  return (bin + 0.5) / num_bins;
}

}  // namespace mad

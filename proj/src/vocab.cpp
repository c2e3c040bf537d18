#include "exin/vocab.hpp"

#include <unordered_map>

#include "exin/error.hpp"

namespace exin::vocab {

namespace {
const std::unordered_map<std::string_view, int>& name_map() {
  static const auto* m = [] {
    auto* mm = new std::unordered_map<std::string_view, int>{
        {"<pad>", kPad},    {"<eos>", kEos},   {"<unk>", kUnk},    {"what", kWhat},
        {"lesion", kLesion}, {"is", kIs},       {"present", kPresent}, {"describe", kDescribe},
        {"the", kThe},      {"finding", kFinding}, {"in", kIn},     {"image", kImage},
        {"answer", kAnswer}, {"region", kRegion},
    };
    for (int c = 0; c < kNumClasses; ++c) mm->emplace(kClassNames[c], kClassBase + c);
    for (int r = 0; r < kNumRegions; ++r) mm->emplace(kRegionNames[r], kRegionBase + r);
    return mm;
  }();
  return *m;
}
}  // namespace

std::string token_name(int id) {
  switch (id) {
    case kPad: return "<pad>";
    case kEos: return "<eos>";
    case kUnk: return "<unk>";
    case kWhat: return "what";
    case kLesion: return "lesion";
    case kIs: return "is";
    case kPresent: return "present";
    case kDescribe: return "describe";
    case kThe: return "the";
    case kFinding: return "finding";
    case kIn: return "in";
    case kImage: return "image";
    case kAnswer: return "answer";
    case kRegion: return "region";
    default: break;
  }
  if (is_class_token(id)) return kClassNames[id - kClassBase];
  if (id >= kRegionBase && id < kRegionBase + kNumRegions) return kRegionNames[id - kRegionBase];
  if (id >= 0 && id < kSize) return "tok" + std::to_string(id);
  throw IndexError("token id " + std::to_string(id) + " outside vocab");
}

int token_id(std::string_view name) {
  auto it = name_map().find(name);
  return it == name_map().end() ? -1 : it->second;
}

std::vector<int> closed_answer(int class_id) {
  if (class_id < 0 || class_id >= kNumClasses)
    throw IndexError("class id " + std::to_string(class_id));
  return {class_token(class_id), kEos};
}

std::vector<int> open_answer(int class_id, int region_id) {
  if (class_id < 0 || class_id >= kNumClasses)
    throw IndexError("class id " + std::to_string(class_id));
  if (region_id < 0 || region_id >= kNumRegions)
    throw IndexError("region id " + std::to_string(region_id));
  return {kAnswer, class_token(class_id), kRegion, region_token(region_id), kEos};
}

std::string decode(const std::vector<int>& ids) {
  std::string s;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) s += ' ';
    s += token_name(ids[i]);
  }
  return s;
}

}  // namespace exin::vocab

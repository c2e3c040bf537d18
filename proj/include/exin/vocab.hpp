#pragma once
#include <string>
#include <string_view>
#include <vector>

namespace exin::vocab {

// Fixed synthetic tokenizer: a closed vocabulary of question/answer/control
// words with pinned ids. No BPE, no learned pieces; id assignments are part
// of the corpus format and must stay stable.
inline constexpr int kPad = 0;
inline constexpr int kEos = 1;
inline constexpr int kUnk = 2;

inline constexpr int kWhat = 3;
inline constexpr int kLesion = 4;
inline constexpr int kIs = 5;
inline constexpr int kPresent = 6;
inline constexpr int kDescribe = 7;
inline constexpr int kThe = 8;
inline constexpr int kFinding = 9;
inline constexpr int kIn = 10;
inline constexpr int kImage = 11;
inline constexpr int kAnswer = 12;
inline constexpr int kRegion = 13;

inline constexpr int kNumClasses = 8;
inline constexpr int kClassBase = 16;  // ids 16..23
inline constexpr int kNumRegions = 5;
inline constexpr int kRegionBase = 24;  // ids 24..28

inline constexpr int kSize = 64;

inline constexpr const char* kClassNames[kNumClasses] = {
    "normal",   "dot_warm", "dot_cool", "ring_warm",
    "ring_cool", "arc_warm", "arc_cool", "cross",
};

inline constexpr const char* kRegionNames[kNumRegions] = {
    "none", "upper_left", "upper_right", "lower_left", "lower_right",
};

std::string token_name(int id);
int token_id(std::string_view name);  // -1 when unknown

inline int class_token(int class_id) { return kClassBase + class_id; }
inline int region_token(int region_id) { return kRegionBase + region_id; }
inline bool is_class_token(int id) { return id >= kClassBase && id < kClassBase + kNumClasses; }

inline std::vector<int> closed_question() { return {kWhat, kLesion, kIs, kPresent}; }
inline std::vector<int> open_question() { return {kDescribe, kThe, kFinding, kIn, kImage}; }

// closed answer: "<class>" + EOS
std::vector<int> closed_answer(int class_id);
// open answer: "answer <class> region <region>" + EOS
std::vector<int> open_answer(int class_id, int region_id);

std::string decode(const std::vector<int>& ids);  // space-joined names, for logs

}  // namespace exin::vocab

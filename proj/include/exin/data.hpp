#pragma once
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "exin/encoders.hpp"

namespace exin {

// One planted lesion: a motif drawn at full strength into the expert channel
// and only faintly imprinted into the general view.
struct LesionSpec {
  int class_id = 0;            // 0 = normal (no lesion)
  std::vector<int> patches;    // patch-grid indices carrying the motif
  double intensity = 0.04;     // imprint amplitude in the general view
  uint64_t pattern_seed = 0;   // drives background, vessels, and placement
  int region = 0;              // 0 none, 1..4 image quadrant of the lesion
};

// Corpus difficulty knobs. Defaults are tuned so the fusion/injection ladder
// separates cleanly at the desk-scale training budget.
struct GenKnobs {
  double imprint = 0.04;   // lesion amplitude in the general view (kept <= 0.05)
  double tint = 0.10;      // warm/cool tint amplitude (general view only)
  double speckle = 0.30;   // distractor amplitude in the expert channel
  int speckle_count = 6;   // distractor dots outside the lesion
  double decoy = 1.0;      // false-detection motif amplitude (expert channel only)
  int decoy_count = 2;     // false-detection motifs planted outside the lesion
};

// class id <-> visual recipe
struct ClassRecipe {
  enum Motif { kNone, kDot, kRing, kArc, kCross } motif = kNone;
  enum Tint { kNeutral, kWarm, kCool } tint = kNeutral;
};
ClassRecipe class_recipe(int class_id);

// Deterministic renderer: fundus-like general view (radial gradient, vessel
// curves, optic disc, per-pixel noise), expert channel carrying the motif at
// full amplitude plus weak distractor speckle, and the ground-truth mask.
ImageSample render_sample(const LesionSpec& spec, const GenKnobs& knobs, int64_t image = 32,
                          int64_t patch = 8);

struct CorpusItem {
  std::string id;
  int64_t blob_offset = 0;
  int class_id = 0;
  int region = 0;
  uint64_t pattern_seed = 0;
  std::string mode;   // "closed" | "open"
  std::string split;  // "train" | "val" | "test"
  std::vector<int> question_ids;
  std::vector<int> answer_ids;  // without the trailing EOS
};

struct CorpusSizes {
  int train_per_class = 500;
  int val_per_class = 50;
  int test_per_class = 100;
};

// Writes index.jsonl, blobs.bin, and manifest.json under out_dir.
// Deterministic: the same seed/sizes/knobs produce byte-identical files.
void generate_corpus(const std::string& out_dir, uint64_t seed, const CorpusSizes& sizes,
                     const GenKnobs& knobs);

// Regenerate a corpus from an existing manifest.json (seed, sizes, knobs).
// The rebuilt index.jsonl and blobs.bin are byte-identical to the originals.
void generate_from_manifest(const std::string& manifest_path, const std::string& out_dir);

// Corpus reader. The blob file is held in memory (read once at open), so
// image loads are cheap and safe to call from many threads at once.
struct Corpus {
  std::string dir;
  std::vector<CorpusItem> items;
  std::shared_ptr<const std::string> blob_bytes;

  static Corpus open(const std::string& dir);  // IoError when files are missing/bad
  ImageSample load_image(const CorpusItem& item) const;
  std::vector<size_t> split_indices(const std::string& split, const std::string& mode = "") const;
};

uint32_t file_crc32(const std::string& path);  // IoError if unreadable

}  // namespace exin

#include "exin/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "exin/checkpoint.hpp"  // crc32_bytes
#include "exin/rng.hpp"
#include "exin/vocab.hpp"

namespace exin {

using json = nlohmann::ordered_json;

ClassRecipe class_recipe(int class_id) {
  switch (class_id) {
    case 0: return {ClassRecipe::kNone, ClassRecipe::kNeutral};
    case 1: return {ClassRecipe::kDot, ClassRecipe::kWarm};
    case 2: return {ClassRecipe::kDot, ClassRecipe::kCool};
    case 3: return {ClassRecipe::kRing, ClassRecipe::kWarm};
    case 4: return {ClassRecipe::kRing, ClassRecipe::kCool};
    case 5: return {ClassRecipe::kArc, ClassRecipe::kWarm};
    case 6: return {ClassRecipe::kArc, ClassRecipe::kCool};
    case 7: return {ClassRecipe::kCross, ClassRecipe::kNeutral};
    default: throw ContractError("unknown class id " + std::to_string(class_id));
  }
}

namespace {

// motif membership inside a patch-local (row, col) cell of size ps
bool motif_pixel(ClassRecipe::Motif m, int64_t r, int64_t c, int64_t ps) {
  const double cr = (static_cast<double>(ps) - 1.0) / 2.0;
  const double dr = static_cast<double>(r) - cr, dc = static_cast<double>(c) - cr;
  const double d2 = dr * dr + dc * dc;
  const double rin = 0.275 * static_cast<double>(ps);   // 2.2 at ps=8
  const double rout = 0.425 * static_cast<double>(ps);  // 3.4 at ps=8
  switch (m) {
    case ClassRecipe::kNone: return false;
    case ClassRecipe::kDot: return d2 <= rin * rin;
    case ClassRecipe::kRing: return d2 > rin * rin && d2 <= rout * rout;
    case ClassRecipe::kArc: return d2 > rin * rin && d2 <= rout * rout && dr < 0.0;
    case ClassRecipe::kCross: return std::abs(dr) <= 0.8 || std::abs(dc) <= 0.8;
  }
  return false;
}

void clamp01(Tensor& t) {
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = std::clamp(t.data()[i], 0.0, 1.0);
}

}  // namespace

ImageSample render_sample(const LesionSpec& spec, const GenKnobs& knobs, int64_t image,
                          int64_t patch) {
  const int64_t H = image, W = image, ps = patch;
  if (ps <= 0 || H % ps != 0) throw ContractError("render: image not divisible by patch");
  const int64_t grid = H / ps, npatch = grid * grid;
  const ClassRecipe recipe = class_recipe(spec.class_id);
  if ((recipe.motif == ClassRecipe::kNone) != spec.patches.empty())
    throw ContractError("render: normal class must have an empty patch set and only it");
  for (int p : spec.patches)
    if (p < 0 || p >= npatch) throw ContractError("render: patch index out of range");
  if (!spec.patches.empty() && !(spec.intensity > 0.0 && spec.intensity <= 0.2))
    throw ContractError("render: intensity must be in (0, 0.2]");
  if (!(knobs.decoy >= 0.0 && knobs.decoy <= 1.0))
    throw ContractError("render: decoy amplitude must be in [0, 1]");
  if (knobs.decoy_count < 0) throw ContractError("render: decoy_count must be non-negative");

  Rng rng(derive_seed(spec.pattern_seed, "render"));
  ImageSample s{Tensor({3, H, W}, 0.0), Tensor({1, H, W}, 0.0), Tensor({H, W}, 0.0)};
  double* g0 = s.general_view.data();
  double* g1 = g0 + H * W;
  double* g2 = g1 + H * W;
  double* ex = s.expert_channel.data();
  double* mk = s.lesion_mask.data();

  // fundus-like base: radial gradient with jittered center and brightness
  const double cx = static_cast<double>(H) / 2.0 + rng.uniform(-2.0, 2.0);
  const double cy = static_cast<double>(W) / 2.0 + rng.uniform(-2.0, 2.0);
  const double base = 0.32 + rng.uniform(-0.04, 0.04);
  const double rmax = 0.75 * static_cast<double>(H);
  for (int64_t y = 0; y < H; ++y) {
    for (int64_t x = 0; x < W; ++x) {
      const double r = std::sqrt((y - cx) * (y - cx) + (x - cy) * (x - cy));
      const double f = base + 0.30 * (1.0 - std::min(1.0, r / rmax));
      g0[y * W + x] = 0.85 * f;
      g1[y * W + x] = 0.55 * f;
      g2[y * W + x] = 0.35 * f;
    }
  }

  // optic disc: a small bright blob off-center
  const double dx = cx + rng.uniform(-0.25, 0.25) * static_cast<double>(H);
  const double dy = cy + rng.uniform(-0.25, 0.25) * static_cast<double>(W);
  const double disc_r = 0.09 * static_cast<double>(H);
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x) {
      const double d = std::sqrt((y - dx) * (y - dx) + (x - dy) * (x - dy));
      if (d <= disc_r) {
        const double lift = 0.22 * (1.0 - d / disc_r);
        g0[y * W + x] += lift;
        g1[y * W + x] += lift;
        g2[y * W + x] += 0.5 * lift;
      }
    }

  // vessel-like curves wandering out of the disc
  const int n_vessels = 2 + static_cast<int>(rng.index(3));
  for (int vi = 0; vi < n_vessels; ++vi) {
    double py = dx, px = dy;
    double theta = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    const int steps = 24 + static_cast<int>(rng.index(16));
    for (int st = 0; st < steps; ++st) {
      theta += rng.uniform(-0.35, 0.35);
      py += std::sin(theta);
      px += std::cos(theta);
      const int64_t iy = static_cast<int64_t>(std::llround(py));
      const int64_t ix = static_cast<int64_t>(std::llround(px));
      if (iy < 0 || iy >= H || ix < 0 || ix >= W) break;
      g0[iy * W + ix] *= 0.55;
      g1[iy * W + ix] *= 0.50;
    }
  }

  // sensor noise
  for (int64_t i = 0; i < H * W; ++i) {
    g0[i] += rng.uniform(-0.02, 0.02);
    g1[i] += rng.uniform(-0.02, 0.02);
    g2[i] += rng.uniform(-0.02, 0.02);
  }

  // warm/cool tint (general view only; this attribute never reaches the
  // expert channel)
  if (recipe.tint == ClassRecipe::kWarm) {
    for (int64_t i = 0; i < H * W; ++i) {
      g0[i] += knobs.tint;
      g2[i] -= 0.5 * knobs.tint;
    }
  } else if (recipe.tint == ClassRecipe::kCool) {
    for (int64_t i = 0; i < H * W; ++i) {
      g2[i] += knobs.tint;
      g0[i] -= 0.5 * knobs.tint;
    }
  }

  // the planted motif: full amplitude in the expert channel, faint imprint in
  // the general view
  for (int p : spec.patches) {
    const int64_t py0 = (p / grid) * ps, px0 = (p % grid) * ps;
    for (int64_t r = 0; r < ps; ++r)
      for (int64_t c = 0; c < ps; ++c) {
        if (!motif_pixel(recipe.motif, r, c, ps)) continue;
        const int64_t y = py0 + r, x = px0 + c;
        ex[y * W + x] = 1.0;
        mk[y * W + x] = 1.0;
        if (recipe.tint == ClassRecipe::kWarm) g0[y * W + x] += spec.intensity;
        else if (recipe.tint == ClassRecipe::kCool) g2[y * W + x] += spec.intensity;
        else g1[y * W + x] += spec.intensity;
      }
  }

  // false detections: motif-shaped decoys drawn into the expert channel only
  // (no mask, no general-view imprint), planted outside the lesion patches on
  // every class including normal. A decoy is distinguishable from a real
  // lesion only by the missing imprint in the general view.
  const ClassRecipe::Motif decoy_motifs[] = {ClassRecipe::kDot, ClassRecipe::kRing,
                                             ClassRecipe::kArc, ClassRecipe::kCross};
  std::vector<int> taken(spec.patches);
  for (int d = 0; d < knobs.decoy_count; ++d) {
    int p = -1;
    for (int tries = 0; tries < 64; ++tries) {
      const int cand = static_cast<int>(rng.index(npatch));
      if (std::find(taken.begin(), taken.end(), cand) == taken.end()) {
        p = cand;
        break;
      }
    }
    if (p < 0) continue;  // grid too full; plant fewer decoys
    taken.push_back(p);
    const ClassRecipe::Motif m = decoy_motifs[rng.index(4)];
    const int64_t py0 = (p / grid) * ps, px0 = (p % grid) * ps;
    for (int64_t r = 0; r < ps; ++r)
      for (int64_t c = 0; c < ps; ++c)
        if (motif_pixel(m, r, c, ps)) {
          const int64_t y = py0 + r, x = px0 + c;
          ex[y * W + x] = std::max(ex[y * W + x], knobs.decoy);
        }
  }

  // distractor speckle outside the lesion patches
  for (int d = 0; d < knobs.speckle_count; ++d) {
    int64_t y = 0, x = 0;
    for (int tries = 0; tries < 64; ++tries) {
      y = rng.index(H);
      x = rng.index(W);
      const int pidx = static_cast<int>((y / ps) * grid + (x / ps));
      if (std::find(spec.patches.begin(), spec.patches.end(), pidx) == spec.patches.end())
        break;
    }
    ex[y * W + x] = std::max(ex[y * W + x], knobs.speckle);
    if (x + 1 < W) ex[y * W + x + 1] = std::max(ex[y * W + x + 1], 0.6 * knobs.speckle);
  }

  clamp01(s.general_view);
  return s;
}

namespace {

struct PlannedItem {
  CorpusItem meta;
  LesionSpec spec;
};

std::vector<int> quadrant_patches(int quadrant, int64_t grid) {
  if (grid % 2 != 0) throw ContractError("corpus: patch grid must be even");
  const int64_t half = grid / 2;
  const int64_t qr = (quadrant - 1) / 2, qc = (quadrant - 1) % 2;
  std::vector<int> out;
  for (int64_t py = qr * half; py < (qr + 1) * half; ++py)
    for (int64_t px = qc * half; px < (qc + 1) * half; ++px)
      out.push_back(static_cast<int>(py * grid + px));
  return out;
}

PlannedItem plan_item(uint64_t corpus_seed, const std::string& split, int class_id, int index,
                      const GenKnobs& knobs, int64_t grid) {
  PlannedItem it;
  char idbuf[64];
  std::snprintf(idbuf, sizeof(idbuf), "%s_c%d_%04d", split.c_str(), class_id, index);
  it.meta.id = idbuf;
  it.meta.class_id = class_id;
  it.meta.split = split;
  it.meta.mode = (index % 2 == 0) ? "closed" : "open";
  it.meta.pattern_seed = derive_seed(corpus_seed, "pattern:" + it.meta.id);

  it.spec.class_id = class_id;
  it.spec.pattern_seed = it.meta.pattern_seed;
  it.spec.intensity = knobs.imprint;
  if (class_id != 0) {
    Rng pr(derive_seed(it.meta.pattern_seed, "placement"));
    const int quadrant = 1 + static_cast<int>(pr.index(4));
    std::vector<int> pool = quadrant_patches(quadrant, grid);
    const int count = 1 + static_cast<int>(pr.index(2));
    for (int c = 0; c < count; ++c) {
      const size_t pick = static_cast<size_t>(pr.index(static_cast<int64_t>(pool.size())));
      it.spec.patches.push_back(pool[pick]);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    std::sort(it.spec.patches.begin(), it.spec.patches.end());
    it.meta.region = quadrant;
    it.spec.region = quadrant;
  }

  if (it.meta.mode == "closed") {
    it.meta.question_ids = vocab::closed_question();
    it.meta.answer_ids = {vocab::class_token(class_id)};
  } else {
    it.meta.question_ids = vocab::open_question();
    it.meta.answer_ids = {vocab::kAnswer, vocab::class_token(class_id), vocab::kRegion,
                          vocab::region_token(it.meta.region)};
  }
  return it;
}

void put_u32_le(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32_le(std::string& out, float f) {
  static_assert(sizeof(float) == 4);
  uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32_le(out, bits);
}

void append_plane(std::string& out, const double* src, int64_t n) {
  for (int64_t i = 0; i < n; ++i) put_f32_le(out, static_cast<float>(src[i]));
}

json knobs_json(const GenKnobs& k) {
  json j;
  j["imprint"] = k.imprint;
  j["tint"] = k.tint;
  j["speckle"] = k.speckle;
  j["speckle_count"] = k.speckle_count;
  j["decoy"] = k.decoy;
  j["decoy_count"] = k.decoy_count;
  return j;
}

}  // namespace

uint32_t file_crc32(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for checksum: " + path);
  uint32_t crc = 0;
  char buf[65536];
  while (in) {
    in.read(buf, sizeof(buf));
    const std::streamsize n = in.gcount();
    if (n > 0)
      crc = crc32_bytes(reinterpret_cast<const uint8_t*>(buf), static_cast<size_t>(n), crc);
  }
  if (in.bad()) throw IoError("read failed during checksum: " + path);
  return crc;
}

void generate_corpus(const std::string& out_dir, uint64_t seed, const CorpusSizes& sizes,
                     const GenKnobs& knobs) {
  if (sizes.train_per_class < 1 || sizes.val_per_class < 1 || sizes.test_per_class < 1)
    throw ConfigError("corpus sizes must be at least 1 per class per split");
  const int64_t image = 32, patch = 8, grid = image / patch;

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create corpus directory: " + out_dir);

  std::vector<PlannedItem> plan;
  const std::pair<std::string, int> split_sizes[] = {
      {"train", sizes.train_per_class}, {"val", sizes.val_per_class},
      {"test", sizes.test_per_class}};
  for (const auto& [split, per_class] : split_sizes)
    for (int k = 0; k < vocab::kNumClasses; ++k)
      for (int i = 0; i < per_class; ++i) plan.push_back(plan_item(seed, split, k, i, knobs, grid));

  const std::string blobs_path = out_dir + "/blobs.bin";
  const std::string index_path = out_dir + "/index.jsonl";
  {
    std::ofstream blobs(blobs_path, std::ios::binary | std::ios::trunc);
    std::ofstream index(index_path, std::ios::binary | std::ios::trunc);
    if (!blobs || !index) throw IoError("cannot open corpus files for writing in " + out_dir);
    int64_t offset = 0;
    for (auto& it : plan) {
      it.meta.blob_offset = offset;
      ImageSample s = render_sample(it.spec, knobs, image, patch);
      std::string blob;
      put_u32_le(blob, static_cast<uint32_t>(image));
      put_u32_le(blob, static_cast<uint32_t>(image));
      put_u32_le(blob, 5);
      append_plane(blob, s.general_view.data(), 3 * image * image);
      append_plane(blob, s.expert_channel.data(), image * image);
      append_plane(blob, s.lesion_mask.data(), image * image);
      blobs.write(blob.data(), static_cast<std::streamsize>(blob.size()));
      offset += static_cast<int64_t>(blob.size());

      json line;
      line["id"] = it.meta.id;
      line["blob_offset"] = it.meta.blob_offset;
      line["class_id"] = it.meta.class_id;
      line["region"] = it.meta.region;
      line["pattern_seed"] = it.meta.pattern_seed;
      line["mode"] = it.meta.mode;
      line["split"] = it.meta.split;
      line["question_ids"] = it.meta.question_ids;
      line["answer_ids"] = it.meta.answer_ids;
      index << line.dump() << "\n";
    }
    if (!blobs || !index) throw IoError("write failed while generating corpus in " + out_dir);
  }

  json manifest;
  manifest["generator_version"] = 1;
  manifest["seed"] = seed;
  manifest["knobs"] = knobs_json(knobs);
  json jsizes;
  jsizes["train_per_class"] = sizes.train_per_class;
  jsizes["val_per_class"] = sizes.val_per_class;
  jsizes["test_per_class"] = sizes.test_per_class;
  manifest["sizes"] = jsizes;
  json counts;
  for (const auto& [split, per_class] : split_sizes) {
    json per;
    for (int k = 0; k < vocab::kNumClasses; ++k) per[vocab::kClassNames[k]] = per_class;
    counts[split] = per;
  }
  manifest["counts"] = counts;
  json files;
  for (const char* f : {"index.jsonl", "blobs.bin"}) {
    json fj;
    const std::string p = out_dir + "/" + f;
    fj["bytes"] = static_cast<int64_t>(std::filesystem::file_size(p));
    fj["crc32"] = file_crc32(p);
    files[f] = fj;
  }
  manifest["files"] = files;
  std::ofstream mf(out_dir + "/manifest.json", std::ios::binary | std::ios::trunc);
  if (!mf) throw IoError("cannot write manifest in " + out_dir);
  mf << manifest.dump(2) << "\n";
  if (!mf) throw IoError("write failed for manifest in " + out_dir);
}

void generate_from_manifest(const std::string& manifest_path, const std::string& out_dir) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest: " + manifest_path);
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const std::exception& e) {
    throw IoError("bad manifest " + manifest_path + ": " + e.what());
  }
  if (manifest.value("generator_version", -1) != 1)
    throw ConfigError("manifest " + manifest_path + " has unsupported generator_version");
  const uint64_t seed = manifest.at("seed").get<uint64_t>();
  CorpusSizes sizes;
  const json& jsizes = manifest.at("sizes");
  sizes.train_per_class = jsizes.at("train_per_class").get<int>();
  sizes.val_per_class = jsizes.at("val_per_class").get<int>();
  sizes.test_per_class = jsizes.at("test_per_class").get<int>();
  GenKnobs knobs;
  const json& jknobs = manifest.at("knobs");
  knobs.imprint = jknobs.at("imprint").get<double>();
  knobs.tint = jknobs.at("tint").get<double>();
  knobs.speckle = jknobs.at("speckle").get<double>();
  knobs.speckle_count = jknobs.at("speckle_count").get<int>();
  knobs.decoy = jknobs.at("decoy").get<double>();
  knobs.decoy_count = jknobs.at("decoy_count").get<int>();
  generate_corpus(out_dir, seed, sizes, knobs);
}

Corpus Corpus::open(const std::string& dir) {
  Corpus c;
  c.dir = dir;
  const std::string index_path = dir + "/index.jsonl";
  std::ifstream in(index_path);
  if (!in) throw IoError("cannot open corpus index: " + index_path);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const std::exception& e) {
      throw IoError(index_path + ":" + std::to_string(lineno) + ": bad index line: " + e.what());
    }
    CorpusItem it;
    it.id = j.at("id").get<std::string>();
    it.blob_offset = j.at("blob_offset").get<int64_t>();
    it.class_id = j.at("class_id").get<int>();
    it.region = j.at("region").get<int>();
    it.pattern_seed = j.at("pattern_seed").get<uint64_t>();
    it.mode = j.at("mode").get<std::string>();
    it.split = j.at("split").get<std::string>();
    it.question_ids = j.at("question_ids").get<std::vector<int>>();
    it.answer_ids = j.at("answer_ids").get<std::vector<int>>();
    c.items.push_back(std::move(it));
  }
  if (c.items.empty()) throw IoError("corpus index is empty: " + index_path);
  const std::string blobs_path = dir + "/blobs.bin";
  std::ifstream bin(blobs_path, std::ios::binary);
  if (!bin) throw IoError("cannot open corpus blobs: " + blobs_path);
  auto bytes = std::make_shared<std::string>(std::istreambuf_iterator<char>(bin),
                                             std::istreambuf_iterator<char>());
  if (bin.bad()) throw IoError("read failed for corpus blobs: " + blobs_path);
  c.blob_bytes = std::move(bytes);
  return c;
}

ImageSample Corpus::load_image(const CorpusItem& item) const {
  if (!blob_bytes) throw IoError("corpus was not opened through Corpus::open");
  const std::string& bytes = *blob_bytes;
  if (item.blob_offset < 0 ||
      static_cast<size_t>(item.blob_offset) + 12 > bytes.size())
    throw IoError("truncated blob for item " + item.id);
  const uint8_t* head = reinterpret_cast<const uint8_t*>(bytes.data()) + item.blob_offset;
  auto u32 = [&](int off) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(head[off + i]) << (8 * i);
    return v;
  };
  const int64_t H = u32(0), W = u32(4), C = u32(8);
  if (C != 5 || H <= 0 || W <= 0 || H > 4096 || W > 4096)
    throw IoError("bad blob header for item " + item.id);
  const int64_t n = C * H * W;
  if (static_cast<size_t>(item.blob_offset) + 12 + static_cast<size_t>(n) * 4 > bytes.size())
    throw IoError("truncated blob payload for item " + item.id);
  const uint8_t* raw = head + 12;
  auto f32 = [&](int64_t i) {
    uint32_t bits = 0;
    for (int b = 0; b < 4; ++b)
      bits |= static_cast<uint32_t>(raw[static_cast<size_t>(i * 4 + b)]) << (8 * b);
    float f;
    std::memcpy(&f, &bits, 4);
    return static_cast<double>(f);
  };
  ImageSample s{Tensor({3, H, W}, 0.0), Tensor({1, H, W}, 0.0), Tensor({H, W}, 0.0)};
  const int64_t plane = H * W;
  for (int64_t i = 0; i < 3 * plane; ++i) s.general_view.data()[i] = f32(i);
  for (int64_t i = 0; i < plane; ++i) s.expert_channel.data()[i] = f32(3 * plane + i);
  for (int64_t i = 0; i < plane; ++i) s.lesion_mask.data()[i] = f32(4 * plane + i);
  return s;
}

std::vector<size_t> Corpus::split_indices(const std::string& split, const std::string& mode) const {
  std::vector<size_t> out;
  for (size_t i = 0; i < items.size(); ++i)
    if (items[i].split == split && (mode.empty() || items[i].mode == mode)) out.push_back(i);
  return out;
}

}  // namespace exin

#include "coral/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <sstream>
#include <string_view>

#include "coral/proposals.hpp"

namespace coral {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open '" + path.string() + "'");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write '" + path.string() + "'");
  return out;
}

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

CorrespondenceFile parse_correspondences(std::istream& in) {
  CorrespondenceFile file;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view text = trim(line);
    if (!header) {
      if (text.empty()) continue;
      if (text.front() != '#') throw MissingHeader("expected '# width height' header");
      std::istringstream hs{std::string(text.substr(1))};
      std::string w, h, extra;
      if (!(hs >> w >> h) || (hs >> extra) || !parse_number(w, file.width) || !parse_number(h, file.height) ||
          file.width < 1 || file.height < 1)
        throw MissingHeader("expected '# width height' header");
      header = true;
      continue;
    }
    if (text.empty() || text.front() == '#') continue;

    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = text.find(',', start);
      fields.push_back(text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (fields.size() != 5) throw ParseError("expected 5 comma-separated fields", line_no);
    double v[4];
    for (int k = 0; k < 4; ++k) {
      if (!parse_number(fields[std::size_t(k)], v[k])) throw ParseError("malformed coordinate", line_no);
      if (!std::isfinite(v[k])) throw ParseError("non-finite coordinate", line_no);
    }
    int label = 0;
    if (!parse_number(fields[4], label)) throw ParseError("malformed label", line_no);
    if (label < kOutlier) throw ParseError("label below -1", line_no);
    file.correspondences.push_back({{v[0], v[1]}, {v[2], v[3]}, Index(file.correspondences.size())});
    file.labels.push_back(label);
  }
  if (!header) throw MissingHeader("expected '# width height' header");
  return file;
}

CorrespondenceFile load_correspondences(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_correspondences(in);
}

void write_correspondences(std::ostream& out, const CorrespondenceFile& file) {
  if (file.labels.size() != file.correspondences.size()) throw DimensionMismatch("one label per correspondence");
  out << "# " << file.width << ' ' << file.height << '\n';
  for (std::size_t i = 0; i < file.correspondences.size(); ++i) {
    const auto& c = file.correspondences[i];
    out << g17(c.u1.x()) << ',' << g17(c.u1.y()) << ',' << g17(c.u2.x()) << ',' << g17(c.u2.y()) << ','
        << file.labels[i] << '\n';
  }
}

void save_correspondences(const std::filesystem::path& path, const CorrespondenceFile& file) {
  auto out = open_out(path);
  write_correspondences(out, file);
  if (!out) throw FileError("write failed for '" + path.string() + "'");
}

namespace {

// Header tokenizer that tracks lines and picks up scale/offset comments.
struct PgmReader {
  const std::string& buf;
  std::size_t pos = 0;
  std::size_t line = 1;
  Grid& grid;

  void comment() {
    const std::size_t end = std::min(buf.find('\n', pos), buf.size());
    std::istringstream cs(buf.substr(pos + 1, end - pos - 1));
    std::string key, value;
    if (cs >> key >> value) {
      if (key == "scale") {
        double s = 0;
        if (!parse_number(value, s) || !std::isfinite(s)) throw ParseError("malformed scale comment", line);
        grid.scale = s;
      } else if (key == "offset") {
        long o = 0;
        if (!parse_number(value, o)) throw ParseError("malformed offset comment", line);
        grid.offset = o;
      }
    }
    pos = end;
  }

  std::string_view token() {
    while (pos < buf.size()) {
      const char ch = buf[pos];
      if (ch == '#') {
        comment();
      } else if (ch == '\n') {
        ++line;
        ++pos;
      } else if (std::isspace(static_cast<unsigned char>(ch))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos])) && buf[pos] != '#') ++pos;
    if (start == pos) throw ParseError("unexpected end of file", line);
    return std::string_view(buf).substr(start, pos - start);
  }

  long integer(const char* what) {
    const auto t = token();
    long v = 0;
    if (!parse_number(t, v)) throw ParseError(std::string("malformed ") + what, line);
    return v;
  }
};

}  // namespace

Grid parse_pgm(std::istream& in) {
  const std::string buf{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  Grid grid;
  PgmReader r{buf, 0, 1, grid};
  const auto magic = r.token();
  if (magic != "P2" && magic != "P5") throw ParseError("not a P2/P5 grid", 1);
  const long w = r.integer("width");
  const long h = r.integer("height");
  const long maxval = r.integer("maxval");
  if (w < 1 || h < 1) throw ParseError("grid dimensions must be positive", r.line);
  if (maxval < 1 || maxval > 65535) throw ParseError("maxval out of range", r.line);
  grid.width = w;
  grid.height = h;
  grid.maxval = int(maxval);
  const std::size_t count = std::size_t(w) * std::size_t(h);
  grid.values.resize(count);

  if (magic == "P2") {
    for (std::size_t i = 0; i < count; ++i) {
      const long v = r.integer("value");
      if (v < 0 || v > maxval) throw ParseError("value exceeds maxval", r.line);
      grid.values[i] = std::uint16_t(v);
    }
  } else {
    if (r.pos >= buf.size()) throw ParseError("missing raster", r.line);
    std::size_t p = r.pos + 1;  // single whitespace after maxval
    const std::size_t bytes = maxval < 256 ? 1 : 2;
    if (buf.size() < p + count * bytes) throw ParseError("truncated raster", r.line);
    for (std::size_t i = 0; i < count; ++i) {
      unsigned v = static_cast<unsigned char>(buf[p++]);
      if (bytes == 2) v = (v << 8) | static_cast<unsigned char>(buf[p++]);
      if (long(v) > maxval) throw ParseError("value exceeds maxval", r.line);
      grid.values[i] = std::uint16_t(v);
    }
  }
  return grid;
}

Grid load_pgm(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    return parse_pgm(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
}

void write_pgm(std::ostream& out, const Grid& grid, bool ascii) {
  if (Index(grid.values.size()) != grid.width * grid.height) throw DimensionMismatch("grid size differs from width x height");
  out << (ascii ? "P2" : "P5") << '\n';
  if (grid.scale) out << "# scale " << g17(*grid.scale) << '\n';
  if (grid.offset != 0) out << "# offset " << grid.offset << '\n';
  out << grid.width << ' ' << grid.height << '\n' << grid.maxval << '\n';
  if (ascii) {
    for (Index y = 0; y < grid.height; ++y) {
      for (Index x = 0; x < grid.width; ++x) {
        if (x) out << ' ';
        out << grid.values[std::size_t(y * grid.width + x)];
      }
      out << '\n';
    }
    return;
  }
  std::string raster;
  raster.reserve(grid.values.size() * 2);
  for (std::uint16_t v : grid.values) {
    if (grid.maxval >= 256) raster.push_back(char(v >> 8));
    raster.push_back(char(v & 0xff));
  }
  out.write(raster.data(), std::streamsize(raster.size()));
}

void save_pgm(const std::filesystem::path& path, const Grid& grid, bool ascii) {
  auto out = open_out(path);
  write_pgm(out, grid, ascii);
  if (!out) throw FileError("write failed for '" + path.string() + "'");
}

Grid label_grid(std::span<const int> labels, Index width, Index height) {
  if (Index(labels.size()) != width * height) throw DimensionMismatch("label count differs from width x height");
  Grid g;
  g.width = width;
  g.height = height;
  g.offset = -1;
  g.values.reserve(labels.size());
  int top = 0;
  for (int l : labels) {
    if (l < kOutlier || l > 65534) throw Error("label out of range for a grid");
    g.values.push_back(std::uint16_t(l + 1));
    top = std::max(top, l + 1);
  }
  g.maxval = top < 256 ? 255 : 65535;
  return g;
}

Labels grid_labels(const Grid& grid) {
  Labels out;
  out.reserve(grid.values.size());
  for (std::uint16_t v : grid.values) out.push_back(int(long(v) + grid.offset));
  return out;
}

Grid depth_grid(std::span<const double> depth_m, Index width, Index height, double scale) {
  if (Index(depth_m.size()) != width * height) throw DimensionMismatch("depth count differs from width x height");
  if (!(scale > 0.0)) throw Error("depth scale must be positive");
  Grid g;
  g.width = width;
  g.height = height;
  g.maxval = 65535;
  g.scale = scale;
  g.values.reserve(depth_m.size());
  for (double d : depth_m) {
    const double units = std::isfinite(d) && d > 0.0 ? std::round(d / scale) : 0.0;
    g.values.push_back(std::uint16_t(std::clamp(units, 0.0, 65535.0)));
  }
  return g;
}

RgbdFrame load_rgbd(const std::filesystem::path& depth, const std::filesystem::path& image,
                    const std::optional<std::filesystem::path>& labels) {
  const Grid dg = load_pgm(depth);
  if (!dg.scale || !(*dg.scale > 0.0)) throw ParseError(depth.string() + ": depth grid needs a positive '# scale'");
  const Grid ig = load_pgm(image);
  if (ig.width != dg.width || ig.height != dg.height) throw DimensionMismatch("depth and image sizes differ");

  RgbdFrame f;
  f.width = dg.width;
  f.height = dg.height;
  const std::size_t n = dg.values.size();
  f.depth.resize(n);
  f.inverse_depth.resize(n);
  f.intensity.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    f.depth[i] = double(dg.values[i]) * *dg.scale;
    f.inverse_depth[i] = dg.values[i] ? 1.0 / f.depth[i] : 0.0;
    f.intensity[i] = double(ig.values[i]) / double(ig.maxval);
  }
  if (labels) {
    const Grid lg = load_pgm(*labels);
    if (lg.width != dg.width || lg.height != dg.height) throw DimensionMismatch("label and depth sizes differ");
    f.instances = grid_labels(lg);
  }
  return f;
}

namespace {

struct PlaneFit {
  InverseDepthPlane<double> plane;
  std::vector<Index> inliers;  // sorted
};

class GroundTruthBuilder {
 public:
  GroundTruthBuilder(const RgbdFrame& f, const GroundTruthConfig& cfg) : f_(f), cfg_(cfg) {}

  Vec2<double> pos(Index i) const { return {double(i % f_.width), double(i / f_.width)}; }

  std::optional<InverseDepthPlane<double>> fit(std::span<const Index> idx) const {
    std::vector<DepthSample<double>> px;
    px.reserve(idx.size());
    for (Index i : idx) px.push_back({pos(i), f_.inverse_depth[std::size_t(i)]});
    try {
      return fit_plane<double>(px);
    } catch (const Error&) {
      return std::nullopt;
    }
  }

  std::vector<Index> inliers(const InverseDepthPlane<double>& plane, std::span<const Index> among) const {
    std::vector<Index> out;
    for (Index i : among)
      if (plane_cost(pos(i), f_.inverse_depth[std::size_t(i)], plane, cfg_.sigma_xi) <= cfg_.inlier_threshold)
        out.push_back(i);
    return out;
  }

  // Refit on the inliers until the inlier set stops changing.
  std::optional<PlaneFit> refine(InverseDepthPlane<double> plane, std::span<const Index> among) const {
    std::vector<Index> in = inliers(plane, among);
    for (int round = 0; round < 50; ++round) {
      auto next = fit(in);
      if (!next) return std::nullopt;
      plane = *next;
      auto again = inliers(plane, among);
      if (again == in) return PlaneFit{plane, std::move(in)};
      in = std::move(again);
    }
    return PlaneFit{plane, std::move(in)};
  }

  // Consensus fit over one pixel set: a set that is already consistent
  // with its least-squares plane is taken as is.
  std::optional<PlaneFit> consensus(std::span<const Index> pixels, std::uint64_t stream) const {
    if (Index(pixels.size()) < 3) return std::nullopt;
    if (auto all = fit(pixels)) {
      if (inliers(*all, pixels).size() == pixels.size()) return PlaneFit{*all, {pixels.begin(), pixels.end()}};
    }
    auto rng = proposal_rng(cfg_.seed, stream);
    std::optional<InverseDepthPlane<double>> best;
    std::size_t best_support = 0;
    for (int it = 0; it < cfg_.iterations; ++it) {
      const auto pick = uniform_sample(Index(pixels.size()), 3, rng);
      const Index sample[3] = {pixels[std::size_t(pick[0])], pixels[std::size_t(pick[1])], pixels[std::size_t(pick[2])]};
      const auto plane = fit(sample);
      if (!plane) continue;
      const std::size_t support = inliers(*plane, pixels).size();
      if (support > best_support) {
        best_support = support;
        best = plane;
      }
    }
    if (!best) return std::nullopt;
    return refine(*best, pixels);
  }

  double relative_distance(const InverseDepthPlane<double>& a, const InverseDepthPlane<double>& b) const {
    const double diag = std::hypot(double(f_.width), double(f_.height));
    const Vec3<double> pa = a.scaled_params(diag);
    const Vec3<double> pb = b.scaled_params(diag);
    const double scale = std::max({pa.norm(), pb.norm(), 1e-300});
    return (pa - pb).norm() / scale;
  }

 private:
  const RgbdFrame& f_;
  const GroundTruthConfig& cfg_;
};

struct Group {
  int first_instance;
  PlaneFit fit;
};

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t i) {
  while (parent[i] != i) i = parent[i] = parent[parent[i]];
  return i;
}

}  // namespace

Labels build_nyu_ground_truth(const RgbdFrame& frame, const GroundTruthConfig& cfg) {
  if (!frame.instances) throw NoLabels("frame has no instance labels");
  const auto& inst = *frame.instances;
  const std::size_t n = std::size_t(frame.width * frame.height);
  if (inst.size() != n || frame.inverse_depth.size() != n) throw DimensionMismatch("instance grid size differs from frame");

  std::map<int, std::vector<Index>> pixels;
  for (std::size_t i = 0; i < n; ++i)
    if (inst[i] >= 0 && frame.inverse_depth[i] > 0.0) pixels[inst[i]].push_back(Index(i));
  bool any = false;
  for (int id : inst) any = any || id >= 0;
  if (!any) throw NoLabels("instance grid has no labeled pixel");

  const GroundTruthBuilder b(frame, cfg);
  std::vector<Group> groups;
  for (const auto& [id, px] : pixels) {
    if (Index(px.size()) < cfg.min_inliers) continue;
    auto fit = b.consensus(px, std::uint64_t(id));
    if (fit && Index(fit->inliers.size()) >= cfg.min_inliers) groups.push_back({id, std::move(*fit)});
  }

  // Merge until no two planes are within tolerance; merged groups are refit
  // on the union of their inliers.
  for (bool merged = true; merged;) {
    merged = false;
    std::vector<std::size_t> parent(groups.size());
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    for (std::size_t a = 0; a < groups.size(); ++a)
      for (std::size_t c = a + 1; c < groups.size(); ++c)
        if (b.relative_distance(groups[a].fit.plane, groups[c].fit.plane) < cfg.merge_tolerance) {
          const std::size_t ra = find_root(parent, a);
          const std::size_t rc = find_root(parent, c);
          if (ra != rc) parent[std::max(ra, rc)] = std::min(ra, rc);
          merged = true;
        }
    if (!merged) break;

    std::vector<Group> next;
    std::map<std::size_t, std::size_t> slot;
    std::vector<std::vector<Index>> unions;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const std::size_t root = find_root(parent, g);
      auto [it, fresh] = slot.emplace(root, next.size());
      if (fresh) {
        next.push_back({groups[g].first_instance, groups[g].fit});
        unions.emplace_back();
      }
      auto& u = unions[it->second];
      u.insert(u.end(), groups[g].fit.inliers.begin(), groups[g].fit.inliers.end());
    }
    std::vector<Group> kept;
    for (std::size_t g = 0; g < next.size(); ++g) {
      std::sort(unions[g].begin(), unions[g].end());
      auto fit = b.fit(unions[g]);
      if (!fit) continue;
      auto refined = b.refine(*fit, unions[g]);
      if (refined && Index(refined->inliers.size()) >= cfg.min_inliers)
        kept.push_back({next[g].first_instance, std::move(*refined)});
    }
    groups = std::move(kept);
  }

  std::sort(groups.begin(), groups.end(), [](const Group& a, const Group& c) { return a.first_instance < c.first_instance; });
  Labels out(n, kOutlier);
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (Index i : groups[g].fit.inliers) out[std::size_t(i)] = int(g);
  return out;
}

}  // namespace coral

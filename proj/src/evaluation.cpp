#include "ctkit/evaluation.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <numeric>
#include <stdexcept>

namespace ctkit {

OtsuResult otsu(std::span<const double> values, std::size_t bins) {
  if (bins < 2) throw std::invalid_argument("otsu: need at least two bins");
  if (values.empty()) throw std::invalid_argument("otsu: empty image");
  double lo = values[0], hi = values[0];
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument("otsu: non-finite pixel");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (lo < 0.0) throw std::invalid_argument("otsu: negative pixels must be clipped first");
  if (!(hi > lo)) throw std::invalid_argument("otsu: image has a single value");

  const double width = hi / static_cast<double>(bins);
  auto bin_of = [&](double v) {
    return std::min(bins - 1, static_cast<std::size_t>(v / width));
  };
  std::vector<double> hist(bins, 0.0);
  for (double v : values) hist[bin_of(v)] += 1.0;

  const double total = static_cast<double>(values.size());
  double sum_all = 0.0;
  for (std::size_t b = 0; b < bins; ++b) sum_all += static_cast<double>(b) * hist[b];
  double w0 = 0.0, sum0 = 0.0, best = -1.0;
  std::size_t best_t = 0;
  for (std::size_t t = 0; t + 1 < bins; ++t) {
    w0 += hist[t];
    sum0 += static_cast<double>(t) * hist[t];
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double d = sum0 / w0 - (sum_all - sum0) / w1;
    const double between = w0 * w1 * d * d;
    if (between > best) {
      best = between;
      best_t = t;
    }
  }
  OtsuResult r;
  r.threshold = static_cast<double>(best_t + 1) * width;
  r.mask.resize(values.size());
  for (std::size_t k = 0; k < values.size(); ++k) r.mask[k] = bin_of(values[k]) > best_t ? 1 : 0;
  return r;
}

OtsuResult otsu(const Image& img, std::size_t bins) { return otsu(img.values, bins); }

Confusion confusion(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
  if (pred.size() != truth.size())
    throw std::invalid_argument("mcc: masks have " + std::to_string(pred.size()) + " and " +
                                std::to_string(truth.size()) + " entries");
  Confusion c;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const bool p = pred[k] != 0, t = truth[k] != 0;
    if (p && t) ++c.tp;
    else if (!p && !t) ++c.tn;
    else if (p) ++c.fp;
    else ++c.fn;
  }
  return c;
}

double mcc(const Confusion& c) {
  const double tp = static_cast<double>(c.tp), tn = static_cast<double>(c.tn);
  const double fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn);
  const double den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (den == 0.0) return 0.0;
  return (tp * tn - fp * fn) / std::sqrt(den);
}

double mcc(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
  return mcc(confusion(pred, truth));
}

double score(const Image& rec, std::span<const std::uint8_t> truth) {
  std::vector<double> clipped(rec.values);
  for (double& v : clipped) v = std::max(v, 0.0);
  const auto [lo, hi] = std::minmax_element(clipped.begin(), clipped.end());
  if (clipped.empty() || !(*hi > *lo)) return mcc(std::vector<std::uint8_t>(truth.size(), 0), truth);
  return mcc(otsu(clipped).mask, truth);
}

const char* method_name(Method m) {
  switch (m) {
    case Method::fbp: return "fbp";
    case Method::fbp_range: return "fbp-range";
    case Method::fnobp: return "fnobp";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  if (name == "fbp") return Method::fbp;
  if (name == "fbp-range" || name == "fbp+range") return Method::fbp_range;
  if (name == "fnobp") return Method::fnobp;
  throw std::invalid_argument("unknown method '" + name + "' (valid: fbp, fbp-range, fnobp)");
}

std::vector<double> default_spans() { return {90, 80, 70, 60, 50, 40, 30}; }

const ScoreRow* ScoreReport::find(Method m, double span_deg) const {
  for (const auto& r : rows)
    if (r.method == m && std::abs(r.span_deg - span_deg) < 1e-9) return &r;
  return nullptr;
}

std::pair<Sinogram, KnownMask> limit_arc(const Sample& s, double span) {
  KnownMask mask = KnownMask::wedge(s.full.geom, s.wedge_start, span);
  Sinogram g = s.full;
  for (std::size_t k = 0; k < g.values.size(); ++k)
    if (!mask.known[k]) g.values[k] = 0.0;
  return {std::move(g), std::move(mask)};
}

Image reconstruct_method(Method method, const Sinogram& g, const KnownMask& mask, const Pipeline& p,
                         const FnoBpModel* model) {
  switch (method) {
    case Method::fbp: return reconstruct_fbp(g, p);
    case Method::fbp_range: return reconstruct_fbp_range(g, mask, p);
    case Method::fnobp:
      if (!model) throw std::invalid_argument("fnobp needs a trained checkpoint");
      return reconstruct(g, mask, *model);
  }
  throw std::logic_error("reconstruct_method: bad method");
}

ScoreReport evaluate(const std::vector<Method>& methods, const std::vector<Sample>& test,
                     const std::vector<double>& spans_deg, const Pipeline& p, const ModelLookup& models) {
  ScoreReport report;
  for (Method method : methods) {
    for (double span : spans_deg) {
      const FnoBpModel* model = nullptr;
      if (method == Method::fnobp) {
        model = models ? models(span) : nullptr;
        if (!model)
          throw std::invalid_argument("fnobp: no checkpoint for span " + std::to_string(span) + " degrees");
      }
      ScoreRow row{method, span, std::vector<double>(test.size(), 0.0), 0.0};
      const auto n = static_cast<long>(test.size());
#pragma omp parallel for schedule(dynamic)
      for (long i = 0; i < n; ++i) {
        const Sample& s = test[static_cast<std::size_t>(i)];
        const auto [g, mask] = limit_arc(s, span * kPi / 180.0);
        row.scores[static_cast<std::size_t>(i)] =
            score(reconstruct_method(method, g, mask, p, model), s.segmentation);
      }
      if (!test.empty())
        row.mean = std::accumulate(row.scores.begin(), row.scores.end(), 0.0) /
                   static_cast<double>(test.size());
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

void write_report_csv(std::ostream& os, const ScoreReport& r) {
  os << "method,span_deg,mean_mcc,count\n";
  char buf[64];
  for (const auto& row : r.rows) {
    std::snprintf(buf, sizeof buf, "%.17g", row.mean);
    os << method_name(row.method) << ',' << row.span_deg << ',' << buf << ',' << row.scores.size() << '\n';
  }
}

void write_report_table(std::ostream& os, const ScoreReport& r) {
  std::vector<double> spans;
  std::vector<Method> methods;
  for (const auto& row : r.rows) {
    if (std::find(spans.begin(), spans.end(), row.span_deg) == spans.end()) spans.push_back(row.span_deg);
    if (std::find(methods.begin(), methods.end(), row.method) == methods.end()) methods.push_back(row.method);
  }
  os << std::left << std::setw(12) << "method";
  for (double s : spans) {
    char head[32];
    std::snprintf(head, sizeof head, "%g deg", s);
    os << std::right << std::setw(9) << head;
  }
  os << '\n';
  for (Method m : methods) {
    os << std::left << std::setw(12) << method_name(m);
    for (double s : spans) {
      const ScoreRow* row = r.find(m, s);
      char cell[32];
      if (row) std::snprintf(cell, sizeof cell, "%.3f", row->mean);
      else std::snprintf(cell, sizeof cell, "-");
      os << std::right << std::setw(9) << cell;
    }
    os << '\n';
  }
}

namespace {

void write_gray_png(const std::filesystem::path& path, std::size_t width, std::size_t height,
                    const std::vector<std::uint8_t>& pixels) {
  FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw std::runtime_error("write_png: cannot open " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw std::runtime_error("write_png: libpng failed on " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t r = 0; r < height; ++r)
    png_write_row(png, const_cast<png_bytep>(pixels.data() + r * width));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

std::vector<std::uint8_t> to_gray(const Image& img) {
  const auto [lo, hi] = std::minmax_element(img.values.begin(), img.values.end());
  const double span = *hi - *lo;
  std::vector<std::uint8_t> out(img.values.size(), 0);
  if (span > 0.0)
    for (std::size_t k = 0; k < out.size(); ++k)
      out[k] = static_cast<std::uint8_t>(std::lround(255.0 * (img.values[k] - *lo) / span));
  return out;
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image& img) {
  if (img.values.empty()) throw std::invalid_argument("write_png: empty image");
  write_gray_png(path, img.side(), img.side(), to_gray(img));
}

void write_png_grid(const std::filesystem::path& path, const std::vector<std::vector<Image>>& rows) {
  constexpr std::size_t gap = 2;
  std::size_t tile = 0, cols = 0;
  for (const auto& row : rows) {
    cols = std::max(cols, row.size());
    for (const auto& img : row) tile = std::max(tile, img.side());
  }
  if (tile == 0) throw std::invalid_argument("write_png_grid: no images");
  const std::size_t width = cols * tile + (cols - 1) * gap;
  const std::size_t height = rows.size() * tile + (rows.size() - 1) * gap;
  std::vector<std::uint8_t> canvas(width * height, 0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      const Image& img = rows[r][c];
      const auto gray = to_gray(img);
      for (std::size_t y = 0; y < img.side(); ++y)
        std::copy_n(gray.begin() + static_cast<std::ptrdiff_t>(y * img.side()), img.side(),
                    canvas.begin() + static_cast<std::ptrdiff_t>((r * (tile + gap) + y) * width + c * (tile + gap)));
    }
  }
  write_gray_png(path, width, height, canvas);
}

}  // namespace ctkit

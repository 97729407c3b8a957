#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ctkit/model.hpp"
#include "ctkit/phantoms.hpp"

namespace ctkit {

struct OtsuResult {
  double threshold = 0.0;  // upper edge of the last background bin
  std::vector<std::uint8_t> mask;
};

/**
 * Otsu threshold over a `bins`-bin histogram of [0, max]. Pixels are
 * classified by histogram bin, so mask = value >= threshold up to rounding at
 * bin edges. Ties keep the lowest threshold. Throws std::invalid_argument
 * for images without two distinct values or with negative pixels.
 */
OtsuResult otsu(std::span<const double> values, std::size_t bins = 256);
OtsuResult otsu(const Image& img, std::size_t bins = 256);

struct Confusion {
  std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;
};
Confusion confusion(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth);

/// Matthews correlation; 0 when any marginal is empty.
double mcc(const Confusion& c);
double mcc(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth);

/// Clip negatives, Otsu, MCC against the truth. A reconstruction without two
/// distinct values segments to all background.
double score(const Image& rec, std::span<const std::uint8_t> truth);

enum class Method { fbp, fbp_range, fnobp };
const char* method_name(Method m);
/// Accepts fbp, fbp-range (or fbp+range) and fnobp; throws
/// std::invalid_argument listing the valid names otherwise.
Method parse_method(const std::string& name);

/// The seven arc spans from 90 down to 30 degrees.
std::vector<double> default_spans();

struct ScoreRow {
  Method method = Method::fbp;
  double span_deg = 0.0;
  std::vector<double> scores;  // per test sample
  double mean = 0.0;
};

struct ScoreReport {
  std::vector<ScoreRow> rows;  // methods outer, spans inner
  const ScoreRow* find(Method m, double span_deg) const;
};

/// Model used for fnobp at a given span; nullptr when none is available.
using ModelLookup = std::function<const FnoBpModel*(double span_deg)>;

/// Limited-arc sinogram of `span` radians starting at the sample's wedge start.
std::pair<Sinogram, KnownMask> limit_arc(const Sample& s, double span);

Image reconstruct_method(Method method, const Sinogram& g, const KnownMask& mask, const Pipeline& p,
                         const FnoBpModel* model);

/**
 * For each method and span: re-mask every test sample to the span, reconstruct,
 * score against its segmentation and average. Throws std::invalid_argument
 * when fnobp is requested without a model for some span.
 */
ScoreReport evaluate(const std::vector<Method>& methods, const std::vector<Sample>& test,
                     const std::vector<double>& spans_deg, const Pipeline& p, const ModelLookup& models);

/// method,span_deg,mean_mcc,count rows.
void write_report_csv(std::ostream& os, const ScoreReport& r);
/// Methods as rows, spans as columns.
void write_report_table(std::ostream& os, const ScoreReport& r);

/// 8-bit grayscale, min-max normalized.
void write_png(const std::filesystem::path& path, const Image& img);
/// Tiles images row by row (each inner vector is one row) with a 2 px gap.
void write_png_grid(const std::filesystem::path& path, const std::vector<std::vector<Image>>& rows);

}  // namespace ctkit

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "tailnet/date.hpp"

namespace tailnet {

/// One raw daily observation of an asset.
struct AssetRecord {
    std::string symbol;
    Date date;
    double close = 0.0;       // quote currency, > 0
    double market_cap = 0.0;  // currency units, > 0

    friend bool operator==(const AssetRecord&, const AssetRecord&) = default;
};

enum class InputFormat {
    PricesLong,  // date,symbol,close,market_cap
    PricesWide,  // date,<sym1>,<sym2>,... closes, with a sibling caps file of the same shape
};

InputFormat parse_input_format(std::string_view tag);

/// Sibling market-cap file expected next to a wide closes file: "<stem>_caps<ext>".
std::filesystem::path default_caps_path(const std::filesystem::path& closes_path);

/// Reads every record of a price file. Row order is preserved (wide files: date-major, then column order).
/// Throws InputError naming file, line and field for malformed rows, nonpositive values and duplicate
/// (symbol, date) keys. `caps_path` is only consulted for the wide format; empty means the default sibling.
std::vector<AssetRecord> load_records(const std::filesystem::path& path, InputFormat format,
                                      const std::filesystem::path& caps_path = {});

/// Immutable aligned date x asset panel of returns and market caps.
///
/// Row t of `returns()` holds the returns realised on `dates()[t]`; caps are observed on the same day.
/// Matrices are column-major so each asset's history is contiguous.
class ReturnPanel {
public:
    ReturnPanel(std::vector<Date> dates, std::vector<std::string> symbols, Eigen::MatrixXd returns,
                Eigen::MatrixXd caps);

    std::size_t periods() const noexcept { return dates_.size(); }
    std::size_t assets() const noexcept { return symbols_.size(); }

    const std::vector<Date>& dates() const noexcept { return dates_; }
    const std::vector<std::string>& symbols() const noexcept { return symbols_; }
    const Eigen::MatrixXd& returns() const noexcept { return returns_; }
    const Eigen::MatrixXd& caps() const noexcept { return caps_; }

    /// Full return history of one asset.
    std::span<const double> series(std::size_t asset) const;

    /// The `length` returns of `asset` ending at (and including) row `last`.
    std::span<const double> window(std::size_t asset, std::size_t last, std::size_t length) const;

    Eigen::VectorXd caps_at(std::size_t row) const { return caps_.row(static_cast<Eigen::Index>(row)).transpose(); }

    std::optional<std::size_t> row_of(Date date) const;

    friend bool operator==(const ReturnPanel& a, const ReturnPanel& b);

private:
    std::vector<Date> dates_;
    std::vector<std::string> symbols_;
    Eigen::MatrixXd returns_;
    Eigen::MatrixXd caps_;
};

/// Inclusive calendar interval; unset ends are open.
struct DateRange {
    std::optional<Date> first;
    std::optional<Date> last;

    bool contains(Date d) const { return (!first || d >= *first) && (!last || d <= *last); }
};

struct GapPolicy {
    enum class Kind { DropAsset, ForwardFill };
    Kind kind = Kind::ForwardFill;
    /// Longest run of missing days that forward-fill repairs.
    int max_gap = 3;
    /// Under forward-fill, fail instead of dropping an asset whose gap exceeds max_gap.
    bool strict = false;
};

enum class ReturnKind { Log, Simple };

struct PanelBuild {
    ReturnPanel panel;
    std::vector<std::string> dropped;
    std::vector<std::string> warnings;
    /// Number of calendar days inserted by forward-fill, per kept asset.
    std::vector<std::size_t> filled_days;
};

/// Aligns the requested assets on their common calendar and differences closes into returns.
///
/// An empty `symbols` selects every symbol in order of first appearance. Each asset's gaps (missing
/// calendar days between consecutive observations) are handled per `policy`; the calendar is then the
/// intersection of the kept assets' days and the first common day is consumed by differencing.
PanelBuild build_panel(std::span<const AssetRecord> records, std::span<const std::string> symbols,
                       const DateRange& range, const GapPolicy& policy, ReturnKind kind = ReturnKind::Log);

/// Canonical panel files: returns.csv and caps.csv in `dir`, header `date,<symbols...>`.
void write_panel(const ReturnPanel& panel, const std::filesystem::path& dir);
ReturnPanel read_panel(const std::filesystem::path& dir);

/// Writes one matrix file: first column date, one column per symbol, 17 significant digits.
void write_matrix_file(const std::filesystem::path& path, std::span<const Date> dates,
                       std::span<const std::string> symbols, const Eigen::MatrixXd& values);

struct MatrixFile {
    std::vector<Date> dates;
    std::vector<std::string> symbols;
    Eigen::MatrixXd values;
};

MatrixFile read_matrix_file(const std::filesystem::path& path);

}  // namespace tailnet

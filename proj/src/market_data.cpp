#include "tailnet/market_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <unordered_map>

#include "tailnet/csv.hpp"
#include "tailnet/errors.hpp"

namespace tailnet {

namespace {

double parse_positive(const csv::Reader& reader, std::string_view field_name, std::string_view text,
                      std::string_view what) {
    double value = 0.0;
    if (!csv::parse_double(text, value) || !std::isfinite(value)) {
        throw InputError(reader.where() + ": field '" + std::string(field_name) + "': cannot parse '" +
                         std::string(text) + "' as a number");
    }
    if (value <= 0.0) {
        throw InputError(reader.where() + ": field '" + std::string(field_name) + "': nonpositive " +
                         std::string(what) + " " + std::string(text));
    }
    return value;
}

Date parse_date_field(const csv::Reader& reader, std::string_view text) {
    try {
        return parse_date(text);
    } catch (const InputError& e) {
        throw InputError(reader.where() + ": field 'date': " + e.what());
    }
}

void check_duplicates(const std::vector<AssetRecord>& records, const std::filesystem::path& path) {
    std::set<std::pair<std::string, Date>> seen;
    for (const auto& r : records) {
        if (!seen.emplace(r.symbol, r.date).second) {
            throw InputError(path.string() + ": duplicate record for (" + r.symbol + ", " + format_date(r.date) + ")");
        }
    }
}

std::vector<AssetRecord> load_long(const std::filesystem::path& path) {
    csv::Reader reader(path);
    std::string line;
    if (!reader.next(line)) {
        throw InputError(path.string() + ": empty file");
    }
    const auto header = csv::split(line);
    const std::vector<std::string_view> expected{"date", "symbol", "close", "market_cap"};
    if (header != expected) {
        throw InputError(reader.where() + ": expected header 'date,symbol,close,market_cap'");
    }

    std::vector<AssetRecord> records;
    std::set<std::pair<std::string, Date>> seen;
    while (reader.next(line)) {
        const auto fields = csv::split(line);
        if (fields.size() != 4) {
            throw InputError(reader.where() + ": expected 4 fields, found " + std::to_string(fields.size()));
        }
        AssetRecord rec;
        rec.date = parse_date_field(reader, fields[0]);
        if (fields[1].empty()) {
            throw InputError(reader.where() + ": field 'symbol': empty");
        }
        rec.symbol = std::string(fields[1]);
        rec.close = parse_positive(reader, "close", fields[2], "price");
        rec.market_cap = parse_positive(reader, "market_cap", fields[3], "market cap");
        if (!seen.emplace(rec.symbol, rec.date).second) {
            throw InputError(reader.where() + ": duplicate record for (" + rec.symbol + ", " +
                             format_date(rec.date) + ")");
        }
        records.push_back(std::move(rec));
    }
    return records;
}

// Wide file: date,<sym...>; an empty cell is a missing observation.
struct WideTable {
    std::vector<std::string> symbols;
    std::map<Date, std::vector<std::optional<double>>> rows;
};

WideTable load_wide_table(const std::filesystem::path& path, std::string_view what) {
    csv::Reader reader(path);
    std::string line;
    if (!reader.next(line)) {
        throw InputError(path.string() + ": empty file");
    }
    const auto header = csv::split(line);
    if (header.size() < 2 || header[0] != "date") {
        throw InputError(reader.where() + ": expected header 'date,<symbol>,...'");
    }
    WideTable table;
    for (std::size_t c = 1; c < header.size(); ++c) {
        table.symbols.emplace_back(header[c]);
    }
    while (reader.next(line)) {
        const auto fields = csv::split(line);
        if (fields.size() != header.size()) {
            throw InputError(reader.where() + ": expected " + std::to_string(header.size()) + " fields, found " +
                             std::to_string(fields.size()));
        }
        const Date d = parse_date_field(reader, fields[0]);
        std::vector<std::optional<double>> values;
        for (std::size_t c = 1; c < fields.size(); ++c) {
            if (fields[c].empty()) {
                values.emplace_back();
            } else {
                values.emplace_back(parse_positive(reader, table.symbols[c - 1], fields[c], what));
            }
        }
        if (!table.rows.emplace(d, std::move(values)).second) {
            throw InputError(reader.where() + ": duplicate date " + format_date(d));
        }
    }
    return table;
}

std::vector<AssetRecord> load_wide(const std::filesystem::path& path, const std::filesystem::path& caps_path) {
    const auto closes = load_wide_table(path, "price");
    const auto caps_file = caps_path.empty() ? default_caps_path(path) : caps_path;
    const auto caps = load_wide_table(caps_file, "market cap");
    if (caps.symbols != closes.symbols) {
        throw InputError(caps_file.string() + ": symbol columns differ from " + path.string());
    }
    std::vector<AssetRecord> records;
    for (const auto& [date, row] : closes.rows) {
        const auto it = caps.rows.find(date);
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (!row[c]) continue;
            if (it == caps.rows.end() || !it->second[c]) {
                throw InputError(caps_file.string() + ": missing market cap for (" + closes.symbols[c] + ", " +
                                 format_date(date) + ")");
            }
            records.push_back(AssetRecord{closes.symbols[c], date, *row[c], *it->second[c]});
        }
    }
    check_duplicates(records, path);
    return records;
}

struct Observation {
    Date date;
    double close;
    double cap;
};

}  // namespace

InputFormat parse_input_format(std::string_view tag) {
    if (tag == "prices-long") return InputFormat::PricesLong;
    if (tag == "prices-wide") return InputFormat::PricesWide;
    throw ConfigError("unknown input format '" + std::string(tag) + "' (expected prices-long or prices-wide)");
}

std::filesystem::path default_caps_path(const std::filesystem::path& closes_path) {
    auto name = closes_path.stem().string() + "_caps" + closes_path.extension().string();
    return closes_path.parent_path() / name;
}

std::vector<AssetRecord> load_records(const std::filesystem::path& path, InputFormat format,
                                      const std::filesystem::path& caps_path) {
    if (!std::filesystem::exists(path)) {
        throw InputError("input file not found: " + path.string());
    }
    return format == InputFormat::PricesLong ? load_long(path) : load_wide(path, caps_path);
}

// ---------------------------------------------------------------------------------------------------------

ReturnPanel::ReturnPanel(std::vector<Date> dates, std::vector<std::string> symbols, Eigen::MatrixXd returns,
                         Eigen::MatrixXd caps)
    : dates_(std::move(dates)), symbols_(std::move(symbols)), returns_(std::move(returns)), caps_(std::move(caps)) {
    const auto t = static_cast<Eigen::Index>(dates_.size());
    const auto n = static_cast<Eigen::Index>(symbols_.size());
    if (dates_.empty() || symbols_.empty()) {
        throw InputError("return panel needs at least one date and one asset");
    }
    if (returns_.rows() != t || returns_.cols() != n || caps_.rows() != t || caps_.cols() != n) {
        throw std::invalid_argument("return panel: matrix shape does not match dates x symbols");
    }
    for (std::size_t k = 1; k < dates_.size(); ++k) {
        if (dates_[k] <= dates_[k - 1]) {
            throw InputError("return panel: dates not strictly increasing at " + format_date(dates_[k]));
        }
    }
    if (!returns_.allFinite() || !caps_.allFinite()) {
        throw InputError("return panel: non-finite cell");
    }
    if ((caps_.array() <= 0.0).any()) {
        throw InputError("return panel: nonpositive market cap");
    }
    if (std::set<std::string>(symbols_.begin(), symbols_.end()).size() != symbols_.size()) {
        throw InputError("return panel: duplicate symbol");
    }
}

std::span<const double> ReturnPanel::series(std::size_t asset) const {
    return {returns_.col(static_cast<Eigen::Index>(asset)).data(), periods()};
}

std::span<const double> ReturnPanel::window(std::size_t asset, std::size_t last, std::size_t length) const {
    if (last >= periods() || length == 0 || length > last + 1) {
        throw std::out_of_range("return panel: window outside sample");
    }
    return series(asset).subspan(last + 1 - length, length);
}

std::optional<std::size_t> ReturnPanel::row_of(Date date) const {
    const auto it = std::lower_bound(dates_.begin(), dates_.end(), date);
    if (it == dates_.end() || *it != date) return std::nullopt;
    return static_cast<std::size_t>(it - dates_.begin());
}

bool operator==(const ReturnPanel& a, const ReturnPanel& b) {
    return a.dates_ == b.dates_ && a.symbols_ == b.symbols_ && a.returns_ == b.returns_ && a.caps_ == b.caps_;
}

// ---------------------------------------------------------------------------------------------------------

PanelBuild build_panel(std::span<const AssetRecord> records, std::span<const std::string> symbols,
                       const DateRange& range, const GapPolicy& policy, ReturnKind kind) {
    if (policy.max_gap < 0) {
        throw ConfigError("gap policy: max_gap must be nonnegative");
    }

    std::vector<std::string> order;
    std::unordered_map<std::string, std::vector<Observation>> by_symbol;
    for (const auto& r : records) {
        auto [it, inserted] = by_symbol.try_emplace(r.symbol);
        if (inserted) order.push_back(r.symbol);
        if (range.contains(r.date)) it->second.push_back({r.date, r.close, r.market_cap});
    }
    std::vector<std::string> wanted = symbols.empty() ? order : std::vector<std::string>(symbols.begin(), symbols.end());

    std::vector<std::string> kept;
    std::vector<std::vector<Observation>> filled;
    std::vector<std::string> dropped;
    std::vector<std::string> warnings;
    std::vector<std::size_t> filled_days;

    for (const auto& sym : wanted) {
        const auto it = by_symbol.find(sym);
        if (it == by_symbol.end() || it->second.size() < 2) {
            throw InputError("symbol " + sym + " has fewer than 2 observations in the requested date range");
        }
        auto obs = it->second;
        std::sort(obs.begin(), obs.end(), [](const Observation& a, const Observation& b) { return a.date < b.date; });

        std::vector<Observation> series{obs.front()};
        std::size_t inserted = 0;
        std::optional<std::string> reject;
        for (std::size_t k = 1; k < obs.size() && !reject; ++k) {
            const auto missing = (obs[k].date - obs[k - 1].date).count() - 1;
            if (missing > 0) {
                if (policy.kind == GapPolicy::Kind::DropAsset || missing > policy.max_gap) {
                    reject = std::to_string(missing) + "-day gap after " + format_date(obs[k - 1].date);
                    break;
                }
                for (long long g = 1; g <= missing; ++g) {
                    series.push_back({obs[k - 1].date + std::chrono::days{g}, obs[k - 1].close, obs[k - 1].cap});
                    ++inserted;
                }
            }
            series.push_back(obs[k]);
        }
        if (reject) {
            if (policy.kind == GapPolicy::Kind::ForwardFill && policy.strict) {
                throw InputError("symbol " + sym + ": " + *reject + " exceeds max_gap " + std::to_string(policy.max_gap));
            }
            warnings.push_back("dropped " + sym + ": " + *reject);
            dropped.push_back(sym);
            continue;
        }
        kept.push_back(sym);
        filled.push_back(std::move(series));
        filled_days.push_back(inserted);
    }

    if (kept.empty()) {
        throw InputError("no assets left after applying the gap policy");
    }

    // Each filled series is contiguous, so the common calendar is the overlap of their spans.
    Date first = filled.front().front().date;
    Date last = filled.front().back().date;
    for (const auto& s : filled) {
        first = std::max(first, s.front().date);
        last = std::min(last, s.back().date);
    }
    if (last <= first) {
        throw InputError("empty intersection calendar: selected assets share fewer than 2 common days");
    }

    const auto days = static_cast<std::size_t>((last - first).count());
    const auto n = kept.size();
    std::vector<Date> dates(days);
    Eigen::MatrixXd rets(static_cast<Eigen::Index>(days), static_cast<Eigen::Index>(n));
    Eigen::MatrixXd caps(static_cast<Eigen::Index>(days), static_cast<Eigen::Index>(n));
    for (std::size_t t = 0; t < days; ++t) dates[t] = first + std::chrono::days{static_cast<long long>(t + 1)};

    for (std::size_t i = 0; i < n; ++i) {
        const auto& s = filled[i];
        const auto offset = static_cast<std::size_t>((first - s.front().date).count());
        for (std::size_t t = 0; t < days; ++t) {
            const auto& prev = s[offset + t];
            const auto& cur = s[offset + t + 1];
            const double r = kind == ReturnKind::Log ? std::log(cur.close / prev.close) : cur.close / prev.close - 1.0;
            rets(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) = r;
            caps(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) = cur.cap;
        }
    }

    return PanelBuild{ReturnPanel(std::move(dates), std::move(kept), std::move(rets), std::move(caps)),
                      std::move(dropped), std::move(warnings), std::move(filled_days)};
}

// ---------------------------------------------------------------------------------------------------------

void write_matrix_file(const std::filesystem::path& path, std::span<const Date> dates,
                       std::span<const std::string> symbols, const Eigen::MatrixXd& values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw InputError("cannot write '" + path.string() + "'");
    }
    out << "date";
    for (const auto& s : symbols) out << ',' << s;
    out << '\n';
    for (std::size_t t = 0; t < dates.size(); ++t) {
        out << format_date(dates[t]);
        for (Eigen::Index i = 0; i < values.cols(); ++i) {
            out << ',' << csv::format_double(values(static_cast<Eigen::Index>(t), i));
        }
        out << '\n';
    }
    if (!out) {
        throw InputError("write failed for '" + path.string() + "'");
    }
}

MatrixFile read_matrix_file(const std::filesystem::path& path) {
    csv::Reader reader(path);
    std::string line;
    if (!reader.next(line)) {
        throw InputError(path.string() + ": empty file");
    }
    const auto header = csv::split(line);
    if (header.size() < 2 || header[0] != "date") {
        throw InputError(reader.where() + ": expected header 'date,<symbol>,...'");
    }
    MatrixFile file;
    for (std::size_t c = 1; c < header.size(); ++c) file.symbols.emplace_back(header[c]);
    std::vector<double> flat;
    while (reader.next(line)) {
        const auto fields = csv::split(line);
        if (fields.size() != header.size()) {
            throw InputError(reader.where() + ": expected " + std::to_string(header.size()) + " fields");
        }
        file.dates.push_back(parse_date_field(reader, fields[0]));
        for (std::size_t c = 1; c < fields.size(); ++c) {
            double v = 0.0;
            if (!csv::parse_double(fields[c], v)) {
                throw InputError(reader.where() + ": field '" + file.symbols[c - 1] + "': cannot parse '" +
                                 std::string(fields[c]) + "'");
            }
            flat.push_back(v);
        }
    }
    const auto rows = static_cast<Eigen::Index>(file.dates.size());
    const auto cols = static_cast<Eigen::Index>(file.symbols.size());
    file.values = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        flat.data(), rows, cols);
    return file;
}

void write_panel(const ReturnPanel& panel, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_matrix_file(dir / "returns.csv", panel.dates(), panel.symbols(), panel.returns());
    write_matrix_file(dir / "caps.csv", panel.dates(), panel.symbols(), panel.caps());
}

ReturnPanel read_panel(const std::filesystem::path& dir) {
    auto rets = read_matrix_file(dir / "returns.csv");
    auto caps = read_matrix_file(dir / "caps.csv");
    if (rets.dates != caps.dates || rets.symbols != caps.symbols) {
        throw InputError(dir.string() + ": returns.csv and caps.csv are not aligned");
    }
    return ReturnPanel(std::move(rets.dates), std::move(rets.symbols), std::move(rets.values), std::move(caps.values));
}

}  // namespace tailnet

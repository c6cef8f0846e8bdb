#include "tailnet/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <openssl/evp.h>

#include <json.hpp>

#include "tailnet/csv.hpp"
#include "tailnet/drivers.hpp"
#include "tailnet/errors.hpp"
#include "tailnet/graphml.hpp"
#include "tailnet/parallel.hpp"
#include "tailnet/similarity_network.hpp"
#include "tailnet/synthlab.hpp"
#include "tailnet/systemic_risk.hpp"
#include "tailnet/tail_metrics.hpp"

namespace tailnet {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// ---------------------------------------------------------------------------------------------------------
// Artifact locations, relative to the output directory.

const fs::path kPanelReturns = "panel/returns.csv";
const fs::path kPanelCaps = "panel/caps.csv";
const fs::path kPanelSummary = "panel/summary.txt";
const fs::path kCoes = "coes/coes.csv";
const fs::path kSimilarity = "network/similarity.csv";
const fs::path kAdjacency = "network/adjacency.csv";
const fs::path kBreakpoints = "network/breakpoints.csv";
const fs::path kDenseDir = "network/dense";
const fs::path kScores = "score/scores.csv";
const fs::path kContributions = "score/contributions.csv";
const fs::path kAnnual = "score/annual.csv";
const fs::path kGraphmlDir = "graphml";
const fs::path kRegressionText = "drivers/regression.txt";
const fs::path kRegressionTable = "drivers/regression.csv";

fs::path manifest_path(Stage stage) { return fs::path("manifests") / (std::string(stage_name(stage)) + ".json"); }

// ---------------------------------------------------------------------------------------------------------
// Hashing

std::string to_hex(const unsigned char* bytes, unsigned len) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned k = 0; k < len; ++k) {
        out += digits[bytes[k] >> 4];
        out += digits[bytes[k] & 0xF];
    }
    return out;
}

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new()) {
        if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) {
            throw ComputationError("sha256: cannot initialise digest");
        }
    }
    ~Sha256() { EVP_MD_CTX_free(ctx_); }
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(const void* data, std::size_t len) { EVP_DigestUpdate(ctx_, data, len); }

    std::string hex() {
        unsigned char md[EVP_MAX_MD_SIZE];
        unsigned len = 0;
        EVP_DigestFinal_ex(ctx_, md, &len);
        return to_hex(md, len);
    }

private:
    EVP_MD_CTX* ctx_;
};

std::string string_digest(std::string_view text) {
    Sha256 h;
    h.update(text.data(), text.size());
    return h.hex();
}

// ---------------------------------------------------------------------------------------------------------
// Config plumbing

bool parse_bool(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config '" + std::string(key) + "': expected a boolean, got '" + std::string(v) + "'");
}

double parse_number(std::string_view key, std::string_view v) {
    double out = 0.0;
    if (!csv::parse_double(v, out) || !std::isfinite(out)) {
        throw ConfigError("config '" + std::string(key) + "': expected a number, got '" + std::string(v) + "'");
    }
    return out;
}

long long parse_integer(std::string_view key, std::string_view v, long long min_value) {
    long long out = 0;
    if (!csv::parse_int(v, out) || out < min_value) {
        throw ConfigError("config '" + std::string(key) + "': expected an integer >= " + std::to_string(min_value) +
                          ", got '" + std::string(v) + "'");
    }
    return out;
}

Date parse_config_date(std::string_view key, std::string_view v) {
    try {
        return parse_date(v);
    } catch (const InputError& e) {
        throw ConfigError("config '" + std::string(key) + "': " + e.what());
    }
}

std::vector<std::string> parse_list(std::string_view v) {
    std::vector<std::string> out;
    for (const auto item : csv::split(v, ',')) {
        if (!item.empty()) out.emplace_back(item);
    }
    return out;
}

std::string join(const std::vector<std::string>& items, char sep = ',') {
    std::string out;
    for (std::size_t k = 0; k < items.size(); ++k) {
        if (k) out += sep;
        out += items[k];
    }
    return out;
}

std::string opt_date(const std::optional<Date>& d) { return d ? format_date(*d) : ""; }

std::string lags_text(const std::map<std::string, int>& lags) {
    std::string out;
    for (const auto& [name, lag] : lags) {
        if (!out.empty()) out += ',';
        out += name + ":" + std::to_string(lag);
    }
    return out;
}

constexpr std::array<std::string_view, 31> kKeys{
    "input",          "input_format",   "caps_input",   "symbols",       "start",
    "end",            "gap_policy",     "max_gap",      "strict_gaps",   "simple_returns",
    "alpha",          "window",         "theta_bar",    "fixed_threshold", "export_adjacency",
    "euler_raw",      "normalize_caps", "export_scores", "export_contributions", "export_annual",
    "export_graphml", "graphml_date",   "covariates",   "lags",          "target",
    "bandwidth",      "raw_cases",      "out",          "threads",       "force",
    "config",
};

// Settings that determine each stage's outputs, in canonical string form.
std::map<std::string, std::string> stage_settings(Stage stage, const PipelineConfig& c) {
    switch (stage) {
        case Stage::Ingest:
            return {{"input", c.input.string()},
                    {"input_format", c.input_format},
                    {"caps_input", c.caps_input.string()},
                    {"symbols", join(c.symbols)},
                    {"start", opt_date(c.date_range.first)},
                    {"end", opt_date(c.date_range.last)},
                    {"gap_policy", c.gap_policy.kind == GapPolicy::Kind::DropAsset ? "drop-asset" : "forward-fill"},
                    {"max_gap", std::to_string(c.gap_policy.max_gap)},
                    {"strict_gaps", c.gap_policy.strict ? "true" : "false"},
                    {"simple_returns", c.return_kind == ReturnKind::Simple ? "true" : "false"}};
        case Stage::Coes:
            return {{"alpha", csv::format_double(c.alpha)}, {"window", std::to_string(c.window)}};
        case Stage::Network:
            return {{"theta_bar", csv::format_double(c.theta_bar)},
                    {"fixed_threshold", c.fixed_threshold ? csv::format_double(*c.fixed_threshold) : ""},
                    {"export_adjacency", c.export_adjacency ? "true" : "false"}};
        case Stage::Score:
            return {{"euler_raw", c.euler_raw ? "true" : "false"},
                    {"normalize_caps", c.normalize_caps ? "true" : "false"},
                    {"export_scores", c.export_scores ? "true" : "false"},
                    {"export_contributions", c.export_contributions ? "true" : "false"},
                    {"export_annual", c.export_annual ? "true" : "false"}};
        case Stage::GraphML:
            return {{"graphml_date", opt_date(c.graphml_date)}};
        case Stage::Drivers:
            return {{"covariates", c.covariates.string()},
                    {"lags", lags_text(c.lags)},
                    {"target", c.target},
                    {"bandwidth", c.bandwidth ? std::to_string(*c.bandwidth) : ""},
                    {"raw_cases", c.raw_cases ? "true" : "false"}};
    }
    return {};
}

unsigned worker_count(const PipelineConfig& c) {
    if (c.threads > 0) return c.threads;
    return std::max(1u, std::thread::hardware_concurrency());
}

// ---------------------------------------------------------------------------------------------------------
// Staged output: files are written next to their destination and renamed on commit.

class ArtifactSet {
public:
    explicit ArtifactSet(fs::path root) : root_(std::move(root)) {}
    ArtifactSet(const ArtifactSet&) = delete;
    ArtifactSet& operator=(const ArtifactSet&) = delete;

    ~ArtifactSet() {
        if (committed_) return;
        streams_.clear();
        std::error_code ec;
        for (const auto& rel : files_) fs::remove(temp_of(rel), ec);
    }

    std::ofstream& open(const fs::path& rel) {
        fs::create_directories((root_ / rel).parent_path());
        auto stream = std::make_unique<std::ofstream>(temp_of(rel), std::ios::binary | std::ios::trunc);
        if (!*stream) {
            throw InputError("cannot write '" + (root_ / rel).string() + "'");
        }
        files_.push_back(rel);
        streams_.push_back(std::move(stream));
        return *streams_.back();
    }

    void write(const fs::path& rel, std::string_view content) { open(rel) << content; }

    void flush() {
        for (std::size_t k = 0; k < streams_.size(); ++k) {
            if (!streams_[k]->flush()) {
                throw InputError("write failed for '" + (root_ / files_[k]).string() + "'");
            }
        }
    }

    /// Directory whose previous contents are discarded on commit.
    void replace_directory(const fs::path& rel) { replaced_dirs_.push_back(rel); }

    /// Removes a stale output from an earlier run (for toggled-off exports).
    void remove_on_commit(const fs::path& rel) { removed_.push_back(rel); }

    void commit() {
        for (std::size_t k = 0; k < streams_.size(); ++k) {
            streams_[k]->flush();
            if (!*streams_[k]) {
                throw InputError("write failed for '" + (root_ / files_[k]).string() + "'");
            }
            streams_[k]->close();
        }
        streams_.clear();
        std::error_code ec;
        for (const auto& rel : removed_) fs::remove(root_ / rel, ec);
        for (const auto& dir : replaced_dirs_) {
            const auto abs = root_ / dir;
            if (!fs::exists(abs)) continue;
            for (const auto& entry : fs::directory_iterator(abs)) {
                const auto rel = fs::relative(entry.path(), root_);
                if (std::find(files_.begin(), files_.end(), rel) == files_.end() &&
                    entry.path().extension() != ".partial") {
                    fs::remove_all(entry.path(), ec);
                }
            }
        }
        for (const auto& rel : files_) fs::rename(temp_of(rel), root_ / rel);
        committed_ = true;
    }

    const std::vector<fs::path>& files() const { return files_; }
    const fs::path& root() const { return root_; }

private:
    fs::path temp_of(const fs::path& rel) const { return root_ / (rel.string() + ".partial"); }

    fs::path root_;
    std::vector<fs::path> files_;
    std::vector<std::unique_ptr<std::ofstream>> streams_;
    std::vector<fs::path> replaced_dirs_;
    std::vector<fs::path> removed_;
    bool committed_ = false;
};

// ---------------------------------------------------------------------------------------------------------
// Manifests

struct Upstream {
    Stage stage;
    std::vector<fs::path> consumed;
};

struct StageContext {
    const PipelineConfig& config;
    fs::path root;
    json chain = json::object();
    json inputs = json::object();
};

json read_manifest(const fs::path& root, Stage stage) {
    const auto path = root / manifest_path(stage);
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("missing artifacts of stage '" + std::string(stage_name(stage)) + "' in " + root.string() +
                          "; run `tailnet " + std::string(stage_name(stage)) + "` first");
    }
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw InputError("corrupt manifest " + path.string() + ": " + e.what());
    }
}

// Verifies upstream digests and configuration chains, filling ctx.chain and ctx.inputs.
void check_upstream(StageContext& ctx, std::span<const Upstream> upstream) {
    for (const auto& up : upstream) {
        const auto manifest = read_manifest(ctx.root, up.stage);
        const auto& outputs = manifest.at("outputs");
        for (const auto& rel : up.consumed) {
            const auto key = rel.generic_string();
            const auto abs = ctx.root / rel;
            if (!outputs.contains(key) || !fs::exists(abs)) {
                throw ConfigError("artifact " + key + " of stage '" + std::string(stage_name(up.stage)) +
                                  "' is missing; re-run that stage with the export enabled");
            }
            const auto digest = file_digest(abs);
            if (digest != outputs.at(key).get<std::string>() && !ctx.config.force) {
                throw ConfigError("stale upstream artifact " + key + ": digest does not match the manifest of stage '" +
                                  std::string(stage_name(up.stage)) + "'; re-run that stage or pass --force");
            }
            ctx.inputs[key] = digest;
        }
        for (const auto& [stage, hash] : manifest.at("chain").items()) {
            if (ctx.chain.contains(stage) && ctx.chain[stage] != hash && !ctx.config.force) {
                throw ConfigError("upstream artifacts were produced under different '" + stage +
                                  "' configurations; re-run the pipeline from that stage or pass --force");
            }
            ctx.chain[stage] = hash;
        }
    }
}

void write_manifest(ArtifactSet& artifacts, Stage stage, StageContext& ctx) {
    const auto settings = stage_settings(stage, ctx.config);
    json config = json::object();
    for (const auto& [k, v] : settings) config[k] = v;

    json hashed = {{"stage", stage_name(stage)}, {"config", config}, {"upstream", ctx.chain}};
    const auto config_hash = string_digest(hashed.dump());
    ctx.chain[std::string(stage_name(stage))] = config_hash;

    json outputs = json::object();
    for (const auto& rel : artifacts.files()) {
        const auto tmp = artifacts.root() / (rel.string() + ".partial");
        outputs[rel.generic_string()] = file_digest(tmp);
    }
    json manifest = {{"stage", stage_name(stage)}, {"config", config},     {"config_hash", config_hash},
                     {"chain", ctx.chain},          {"inputs", ctx.inputs}, {"outputs", outputs}};
    artifacts.write(manifest_path(stage), manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------------------------------------------------
// Artifact readers

struct CoesTensor {
    std::vector<std::string> symbols;
    std::vector<CoESMatrix> matrices;
};

struct SymbolIndex {
    std::vector<std::string> symbols;
    std::unordered_map<std::string, std::size_t> index;

    std::size_t intern(std::string_view s) {
        auto [it, inserted] = index.try_emplace(std::string(s), symbols.size());
        if (inserted) symbols.emplace_back(s);
        return it->second;
    }

    std::size_t at(const csv::Reader& reader, std::string_view s) const {
        const auto it = index.find(std::string(s));
        if (it == index.end()) throw InputError(reader.where() + ": unknown symbol '" + std::string(s) + "'");
        return it->second;
    }
};

std::vector<std::string_view> expect_fields(const csv::Reader& reader, std::string_view line, std::size_t count) {
    auto fields = csv::split(line);
    if (fields.size() != count) {
        throw InputError(reader.where() + ": expected " + std::to_string(count) + " fields, found " +
                         std::to_string(fields.size()));
    }
    return fields;
}

double number_field(const csv::Reader& reader, std::string_view name, std::string_view text) {
    double v = 0.0;
    if (!csv::parse_double(text, v)) {
        throw InputError(reader.where() + ": field '" + std::string(name) + "': cannot parse '" + std::string(text) + "'");
    }
    return v;
}

Date date_field(const csv::Reader& reader, std::string_view text) {
    try {
        return parse_date(text);
    } catch (const InputError& e) {
        throw InputError(reader.where() + ": field 'date': " + e.what());
    }
}

void expect_header(csv::Reader& reader, std::string& line, std::string_view header) {
    if (!reader.next(line) || line != header) {
        throw InputError(reader.where() + ": expected header '" + std::string(header) + "'");
    }
}

CoesTensor read_coes(const fs::path& path) {
    struct Row {
        Date date;
        std::size_t i, j;
        double coes, var;
    };
    csv::Reader reader(path);
    std::string line;
    expect_header(reader, line, "date,i,j,coes,var_j");
    SymbolIndex symbols;
    std::vector<Row> rows;
    while (reader.next(line)) {
        const auto f = expect_fields(reader, line, 5);
        rows.push_back({date_field(reader, f[0]), symbols.intern(f[1]), symbols.intern(f[2]),
                        number_field(reader, "coes", f[3]), number_field(reader, "var_j", f[4])});
    }
    const auto n = symbols.symbols.size();
    if (rows.empty() || rows.size() % (n * n) != 0) {
        throw InputError(path.string() + ": CoES tensor is not a sequence of complete " + std::to_string(n) + "x" +
                         std::to_string(n) + " matrices");
    }
    CoesTensor out{symbols.symbols, {}};
    const auto block = n * n;
    for (std::size_t b = 0; b < rows.size() / block; ++b) {
        CoESMatrix m{rows[b * block].date, Eigen::MatrixXd::Constant(n, n, std::nan("")),
                     Eigen::VectorXd::Constant(n, std::nan(""))};
        for (std::size_t r = b * block; r < (b + 1) * block; ++r) {
            const auto& row = rows[r];
            if (row.date != m.date) {
                throw InputError(path.string() + ": rows of " + format_date(m.date) + " are incomplete");
            }
            m.values(static_cast<Eigen::Index>(row.i), static_cast<Eigen::Index>(row.j)) = row.coes;
            m.var(static_cast<Eigen::Index>(row.j)) = row.var;
        }
        if (!m.values.allFinite()) {
            throw InputError(path.string() + ": CoES matrix of " + format_date(m.date) + " has missing entries");
        }
        if (!out.matrices.empty() && m.date <= out.matrices.back().date) {
            throw InputError(path.string() + ": dates not strictly increasing at " + format_date(m.date));
        }
        out.matrices.push_back(std::move(m));
    }
    return out;
}

void write_coes(std::ostream& out, std::span<const std::string> symbols, std::span<const CoESMatrix> tensor) {
    out << "date,i,j,coes,var_j\n";
    for (const auto& m : tensor) {
        const auto date = format_date(m.date);
        for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.values.cols(); ++j) {
                out << date << ',' << symbols[static_cast<std::size_t>(i)] << ',' << symbols[static_cast<std::size_t>(j)]
                    << ',' << csv::format_double(m.values(i, j)) << ',' << csv::format_double(m.var(j)) << '\n';
            }
        }
    }
}

// Similarity sets keyed by the panel's symbol order.
std::vector<CorrelationSet> read_similarity(const fs::path& path, std::span<const std::string> symbols) {
    csv::Reader reader(path);
    std::string line;
    expect_header(reader, line, "date,i,j,rho");
    SymbolIndex index;
    for (const auto& s : symbols) index.intern(s);
    const auto n = symbols.size();
    std::vector<CorrelationSet> out;
    std::vector<char> seen;
    while (reader.next(line)) {
        const auto f = expect_fields(reader, line, 4);
        const Date d = date_field(reader, f[0]);
        if (out.empty() || out.back().date != d) {
            if (!out.empty() && d < out.back().date) {
                throw InputError(reader.where() + ": dates not increasing");
            }
            CorrelationSet cs;
            cs.date = d;
            cs.assets = n;
            cs.rho.assign(pair_count(n), std::nan(""));
            cs.pairs.reserve(pair_count(n));
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = i + 1; j < n; ++j) cs.pairs.push_back({i, j});
            }
            out.push_back(std::move(cs));
        }
        const auto i = index.at(reader, f[1]);
        const auto j = index.at(reader, f[2]);
        out.back().rho[pair_index(i, j, n)] = number_field(reader, "rho", f[3]);
    }
    for (const auto& cs : out) {
        for (const double r : cs.rho) {
            if (std::isnan(r)) throw InputError(path.string() + ": incomplete similarity set on " + format_date(cs.date));
        }
    }
    return out;
}

// Adjacency matrices for `dates`, from the long nonzero-entry file. With `subset`, rows of other
// dates are skipped instead of rejected.
std::vector<SignedAdjacency> read_adjacency(const fs::path& path, std::span<const std::string> symbols,
                                            std::span<const Date> dates, bool subset = false) {
    csv::Reader reader(path);
    std::string line;
    expect_header(reader, line, "date,i,j,a");
    SymbolIndex index;
    for (const auto& s : symbols) index.intern(s);
    const auto n = static_cast<Eigen::Index>(symbols.size());
    std::vector<SignedAdjacency> out;
    for (const auto d : dates) out.push_back({d, Eigen::MatrixXi::Zero(n, n)});
    while (reader.next(line)) {
        const auto f = expect_fields(reader, line, 4);
        const Date d = date_field(reader, f[0]);
        const auto it = std::lower_bound(dates.begin(), dates.end(), d);
        if (it == dates.end() || *it != d) {
            if (subset) continue;
            throw InputError(reader.where() + ": date " + format_date(d) + " has no similarity set");
        }
        const auto i = static_cast<Eigen::Index>(index.at(reader, f[1]));
        const auto j = static_cast<Eigen::Index>(index.at(reader, f[2]));
        long long a = 0;
        if (!csv::parse_int(f[3], a) || (a != 1 && a != -1) || i == j) {
            throw InputError(reader.where() + ": invalid adjacency entry");
        }
        auto& m = out[static_cast<std::size_t>(it - dates.begin())].a;
        m(i, j) = static_cast<int>(a);
        m(j, i) = static_cast<int>(a);
    }
    return out;
}

RiskSeries read_risk_series(const fs::path& scores_path, const fs::path& contributions_path) {
    RiskSeries series;
    {
        csv::Reader reader(scores_path);
        std::string line;
        expect_header(reader, line, "date,score,negative_ratio");
        while (reader.next(line)) {
            const auto f = expect_fields(reader, line, 3);
            series.dates.push_back(date_field(reader, f[0]));
            series.score.push_back(number_field(reader, "score", f[1]));
            series.negative_ratio.push_back(number_field(reader, "negative_ratio", f[2]));
        }
    }
    if (!fs::exists(contributions_path)) return series;
    csv::Reader reader(contributions_path);
    std::string line;
    expect_header(reader, line, "date,symbol,contribution");
    SymbolIndex index;
    std::vector<std::tuple<Date, std::size_t, double>> rows;
    while (reader.next(line)) {
        const auto f = expect_fields(reader, line, 3);
        rows.emplace_back(date_field(reader, f[0]), index.intern(f[1]), number_field(reader, "contribution", f[2]));
    }
    series.symbols = index.symbols;
    series.contributions = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(series.size()),
                                                 static_cast<Eigen::Index>(series.symbols.size()));
    for (const auto& [d, i, v] : rows) {
        const auto it = std::lower_bound(series.dates.begin(), series.dates.end(), d);
        if (it == series.dates.end() || *it != d) {
            throw InputError(contributions_path.string() + ": date " + format_date(d) + " missing from scores");
        }
        series.contributions(it - series.dates.begin(), static_cast<Eigen::Index>(i)) = v;
    }
    return series;
}

std::string opt_number(const std::optional<double>& v) { return v ? csv::format_double(*v) : ""; }

// ---------------------------------------------------------------------------------------------------------
// Stages

void stage_ingest(StageContext& ctx, ArtifactSet& artifacts, StageReport& report) {
    const auto& c = ctx.config;
    if (c.input.empty()) {
        throw ConfigError("no input file given (set `input`, pass --input or run `simulate` first)");
    }
    const auto format = parse_input_format(c.input_format);
    const auto records = load_records(c.input, format, c.caps_input);
    ctx.inputs[c.input.generic_string()] = file_digest(c.input);
    if (format == InputFormat::PricesWide) {
        const auto caps = c.caps_input.empty() ? default_caps_path(c.input) : c.caps_input;
        ctx.inputs[caps.generic_string()] = file_digest(caps);
    }
    auto build = build_panel(records, c.symbols, c.date_range, c.gap_policy, c.return_kind);
    const auto& panel = build.panel;
    if (panel.assets() < 2) {
        throw InputError("panel has " + std::to_string(panel.assets()) + " asset(s); at least 2 are required");
    }

    auto write_matrix = [&](const fs::path& rel, const Eigen::MatrixXd& values) {
        auto& out = artifacts.open(rel);
        out << "date";
        for (const auto& s : panel.symbols()) out << ',' << s;
        out << '\n';
        for (std::size_t t = 0; t < panel.periods(); ++t) {
            out << format_date(panel.dates()[t]);
            for (Eigen::Index i = 0; i < values.cols(); ++i) {
                out << ',' << csv::format_double(values(static_cast<Eigen::Index>(t), i));
            }
            out << '\n';
        }
    };
    write_matrix(kPanelReturns, panel.returns());
    write_matrix(kPanelCaps, panel.caps());

    std::ostringstream summary;
    summary << "assets: " << panel.assets() << '\n'
            << "periods: " << panel.periods() << '\n'
            << "first_date: " << format_date(panel.dates().front()) << '\n'
            << "last_date: " << format_date(panel.dates().back()) << '\n'
            << "returns: " << (c.return_kind == ReturnKind::Log ? "log" : "simple") << '\n'
            << "symbols: " << join(panel.symbols()) << '\n'
            << "dropped: " << join(build.dropped) << '\n';
    for (std::size_t i = 0; i < panel.assets(); ++i) {
        if (build.filled_days[i] > 0) {
            summary << "forward_filled: " << panel.symbols()[i] << ' ' << build.filled_days[i] << '\n';
        }
    }
    for (const auto& w : build.warnings) summary << "warning: " << w << '\n';
    artifacts.write(kPanelSummary, summary.str());
    report.messages = build.warnings;
    report.messages.push_back("panel: " + std::to_string(panel.assets()) + " assets x " +
                              std::to_string(panel.periods()) + " days");
}

void stage_coes(StageContext& ctx, ArtifactSet& artifacts, StageReport& report) {
    const std::array<Upstream, 1> up{Upstream{Stage::Ingest, {kPanelReturns, kPanelCaps}}};
    check_upstream(ctx, up);
    const auto panel = read_panel(ctx.root / "panel");
    const TailConfig tc{ctx.config.alpha, ctx.config.window};
    const auto tensor = rolling_coes(panel, tc, worker_count(ctx.config));
    write_coes(artifacts.open(kCoes), panel.symbols(), tensor);
    report.messages.push_back(std::to_string(tensor.size()) + " CoES matrices");
}

void stage_network(StageContext& ctx, ArtifactSet& artifacts, StageReport& report) {
    const std::array<Upstream, 1> up{Upstream{Stage::Coes, {kCoes}}};
    check_upstream(ctx, up);
    const auto& c = ctx.config;
    const auto tensor = read_coes(ctx.root / kCoes);
    const auto& symbols = tensor.symbols;
    const auto count = tensor.matrices.size();

    std::vector<CorrelationSet> sets(count);
    std::vector<Network> nets(count);
    parallel_for(count, worker_count(c), [&](std::size_t k) {
        sets[k] = correlation_set(tensor.matrices[k], symbols);
        nets[k] = c.fixed_threshold ? build_adjacency_fixed(sets[k], *c.fixed_threshold)
                                    : build_adjacency(sets[k], c.theta_bar);
    });

    auto& sim = artifacts.open(kSimilarity);
    sim << "date,i,j,rho\n";
    auto& adj = artifacts.open(kAdjacency);
    adj << "date,i,j,a\n";
    auto& bp = artifacts.open(kBreakpoints);
    bp << "date,theta_bar,theta_plus,theta_minus,threshold_plus,threshold_minus,n1,n2,n_zero,positive_edges,"
          "negative_edges,negative_ratio\n";
    for (std::size_t k = 0; k < count; ++k) {
        const auto date = format_date(sets[k].date);
        for (std::size_t p = 0; p < sets[k].size(); ++p) {
            const auto& pair = sets[k].pairs[p];
            sim << date << ',' << symbols[pair.i] << ',' << symbols[pair.j] << ',' << csv::format_double(sets[k].rho[p])
                << '\n';
        }
        const auto& a = nets[k].adjacency.a;
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            for (Eigen::Index j = i + 1; j < a.cols(); ++j) {
                if (a(i, j) != 0) {
                    adj << date << ',' << symbols[static_cast<std::size_t>(i)] << ','
                        << symbols[static_cast<std::size_t>(j)] << ',' << a(i, j) << '\n';
                }
            }
        }
        const auto& b = nets[k].breakpoints;
        bp << date << ',' << (c.fixed_threshold ? "" : csv::format_double(b.theta_bar)) << ','
           << opt_number(b.theta_plus) << ',' << opt_number(b.theta_minus) << ',' << opt_number(b.threshold_plus)
           << ',' << opt_number(b.threshold_minus) << ',' << b.n1 << ',' << b.n2 << ',' << b.n_zero << ','
           << b.positive_edges << ',' << b.negative_edges << ',' << csv::format_double(b.negative_ratio()) << '\n';

        if (c.export_adjacency) {
            auto& dense = artifacts.open(kDenseDir / (date + ".csv"));
            dense << "symbol";
            for (const auto& s : symbols) dense << ',' << s;
            dense << '\n';
            for (Eigen::Index i = 0; i < a.rows(); ++i) {
                dense << symbols[static_cast<std::size_t>(i)];
                for (Eigen::Index j = 0; j < a.cols(); ++j) dense << ',' << a(i, j);
                dense << '\n';
            }
        }
    }
    artifacts.replace_directory(kDenseDir);
    report.messages.push_back(std::to_string(count) + " dated networks");
}

void stage_score(StageContext& ctx, ArtifactSet& artifacts, StageReport& report) {
    const std::array<Upstream, 2> up{Upstream{Stage::Ingest, {kPanelReturns, kPanelCaps}},
                                     Upstream{Stage::Network, {kSimilarity, kAdjacency}}};
    check_upstream(ctx, up);
    const auto& c = ctx.config;
    const auto panel = read_panel(ctx.root / "panel");
    const auto sets = read_similarity(ctx.root / kSimilarity, panel.symbols());
    std::vector<Date> dates;
    for (const auto& cs : sets) dates.push_back(cs.date);
    const auto adjacencies = read_adjacency(ctx.root / kAdjacency, panel.symbols(), dates);

    const RiskOptions options{c.euler_raw ? ContributionRule::EulerRaw : ContributionRule::Additive, c.normalize_caps};
    const auto series = risk_series(adjacencies, panel, sets, options);

    if (c.export_scores) {
        auto& out = artifacts.open(kScores);
        out << "date,score,negative_ratio\n";
        for (std::size_t t = 0; t < series.size(); ++t) {
            out << format_date(series.dates[t]) << ',' << csv::format_double(series.score[t]) << ','
                << csv::format_double(series.negative_ratio[t]) << '\n';
        }
    } else {
        artifacts.remove_on_commit(kScores);
    }
    if (c.export_contributions) {
        auto& out = artifacts.open(kContributions);
        out << "date,symbol,contribution\n";
        for (std::size_t t = 0; t < series.size(); ++t) {
            const auto date = format_date(series.dates[t]);
            for (std::size_t i = 0; i < series.symbols.size(); ++i) {
                out << date << ',' << series.symbols[i] << ','
                    << csv::format_double(series.contributions(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)))
                    << '\n';
            }
        }
    } else {
        artifacts.remove_on_commit(kContributions);
    }
    if (c.export_annual) {
        const auto table = annual_table(series);
        auto& out = artifacts.open(kAnnual);
        out << "symbol";
        for (const int y : table.years) out << ',' << y;
        out << '\n';
        for (std::size_t i = 0; i < table.symbols.size(); ++i) {
            out << table.symbols[i];
            for (Eigen::Index y = 0; y < table.contribution.cols(); ++y) {
                out << ',' << csv::format_double(table.contribution(static_cast<Eigen::Index>(i), y));
            }
            out << '\n';
        }
        out << "systemic_risk_score";
        for (const double s : table.score) out << ',' << csv::format_double(s);
        out << "\naverage_risk_score";
        for (const double s : table.average_score) out << ',' << csv::format_double(s);
        out << '\n';
    } else {
        artifacts.remove_on_commit(kAnnual);
    }
    report.messages.push_back(std::to_string(series.size()) + " dated risk scores");
}

void stage_graphml(StageContext& ctx, ArtifactSet& artifacts, StageReport& report) {
    const std::array<Upstream, 3> up{Upstream{Stage::Ingest, {kPanelReturns, kPanelCaps}},
                                     Upstream{Stage::Network, {kSimilarity, kAdjacency}},
                                     Upstream{Stage::Score, {kScores, kContributions}}};
    check_upstream(ctx, up);
    const auto panel = read_panel(ctx.root / "panel");
    const auto series = read_risk_series(ctx.root / kScores, ctx.root / kContributions);
    if (series.size() == 0) {
        throw InputError("no dated networks available");
    }
    const Date date = ctx.config.graphml_date.value_or(series.dates.back());
    const auto it = std::lower_bound(series.dates.begin(), series.dates.end(), date);
    if (it == series.dates.end() || *it != date) {
        std::string available;
        const auto total = series.dates.size();
        for (std::size_t k = 0; k < total; ++k) {
            if (total > 12 && k == 6) {
                available += " ... (" + std::to_string(total - 12) + " more) ...";
                k = total - 6;
            }
            available += " " + format_date(series.dates[k]);
        }
        throw ConfigError("no network for " + format_date(date) + "; available dates:" + available);
    }
    const auto t = static_cast<std::size_t>(it - series.dates.begin());
    const std::array<Date, 1> one{date};
    const auto adjacency = read_adjacency(ctx.root / kAdjacency, panel.symbols(), one, true).front();
    const auto row = panel.row_of(date);
    if (!row) throw InputError("panel has no caps for " + format_date(date));
    if (series.symbols != panel.symbols()) {
        throw InputError("score contributions and panel list different symbols");
    }
    const Eigen::VectorXd contributions = series.contributions.row(static_cast<Eigen::Index>(t)).transpose();
    const auto rel = kGraphmlDir / ("network_" + format_date(date) + ".graphml");
    artifacts.replace_directory(kGraphmlDir);
    write_graphml(artifacts.open(rel), adjacency, panel.symbols(), panel.caps_at(*row), contributions);
    report.messages.push_back("graph for " + format_date(date));
}

void stage_drivers(StageContext& ctx, ArtifactSet& artifacts, StageReport& report) {
    const auto& c = ctx.config;
    if (c.covariates.empty()) {
        throw ConfigError("no covariate file given (set `covariates` or pass --covariates)");
    }
    const bool needs_contributions = c.target != "score" && c.target != "negative_ratio";
    std::vector<fs::path> consumed{kScores};
    if (needs_contributions) consumed.push_back(kContributions);
    const std::array<Upstream, 1> up{Upstream{Stage::Score, consumed}};
    check_upstream(ctx, up);

    auto table = load_covariates(c.covariates);
    ctx.inputs[c.covariates.generic_string()] = file_digest(c.covariates);
    if (!c.raw_cases) {
        for (const auto& name : table.names) {
            std::string lower = name;
            std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
            if (lower.find("cases") != std::string::npos) {
                log1p_transform(table, name);
                report.messages.push_back("log(1 + x) applied to " + name);
            }
        }
    }
    const auto series =
        read_risk_series(ctx.root / kScores, needs_contributions ? ctx.root / kContributions : fs::path{});
    const auto design = align_covariates(series, table, c.lags, c.target);
    const auto bandwidth = c.bandwidth.value_or(default_bandwidth(static_cast<std::size_t>(design.y.size())));
    const auto result = ols_hac(design.y, design.x, bandwidth, design.names);
    artifacts.write(kRegressionText, "target: " + c.target + "\n" + format_report(result));
    artifacts.write(kRegressionTable, format_table(result));
    report.messages.push_back("regression on " + std::to_string(result.observations) + " observations");
}

}  // namespace

// -------------------------------------------------------------------------------------------------------------

std::string_view stage_name(Stage stage) {
    switch (stage) {
        case Stage::Ingest: return "ingest";
        case Stage::Coes: return "coes";
        case Stage::Network: return "network";
        case Stage::Score: return "score";
        case Stage::GraphML: return "export-graphml";
        case Stage::Drivers: return "drivers";
    }
    return "?";
}

Stage parse_stage(std::string_view name) {
    for (const auto s : {Stage::Ingest, Stage::Coes, Stage::Network, Stage::Score, Stage::GraphML, Stage::Drivers}) {
        if (stage_name(s) == name) return s;
    }
    if (name == "graphml") return Stage::GraphML;
    throw ConfigError("unknown stage '" + std::string(name) +
                      "' (expected ingest, coes, network, score, export-graphml or drivers)");
}

std::span<const std::string_view> config_keys() { return {kKeys.data(), kKeys.size() - 1}; }

void set_config_value(PipelineConfig& c, std::string_view key, std::string_view v) {
    if (key == "input") c.input = std::string(v);
    else if (key == "input_format") { (void)parse_input_format(v); c.input_format = std::string(v); }
    else if (key == "caps_input") c.caps_input = std::string(v);
    else if (key == "symbols") c.symbols = parse_list(v);
    else if (key == "start") c.date_range.first = v.empty() ? std::nullopt : std::optional(parse_config_date(key, v));
    else if (key == "end") c.date_range.last = v.empty() ? std::nullopt : std::optional(parse_config_date(key, v));
    else if (key == "gap_policy") {
        if (v == "drop-asset") c.gap_policy.kind = GapPolicy::Kind::DropAsset;
        else if (v == "forward-fill") c.gap_policy.kind = GapPolicy::Kind::ForwardFill;
        else throw ConfigError("config 'gap_policy': expected drop-asset or forward-fill, got '" + std::string(v) + "'");
    }
    else if (key == "max_gap") c.gap_policy.max_gap = static_cast<int>(parse_integer(key, v, 0));
    else if (key == "strict_gaps") c.gap_policy.strict = parse_bool(key, v);
    else if (key == "simple_returns") c.return_kind = parse_bool(key, v) ? ReturnKind::Simple : ReturnKind::Log;
    else if (key == "alpha") {
        c.alpha = parse_number(key, v);
        if (!(c.alpha > 0.0) || c.alpha > 0.5) throw ConfigError("config 'alpha': must lie in (0, 0.5]");
    }
    else if (key == "window") c.window = static_cast<std::size_t>(parse_integer(key, v, 2));
    else if (key == "theta_bar") {
        c.theta_bar = parse_number(key, v);
        if (!(c.theta_bar > 0.0) || !(c.theta_bar < 0.5)) throw ConfigError("config 'theta_bar': must lie in (0, 0.5)");
    }
    else if (key == "fixed_threshold") c.fixed_threshold = v.empty() ? std::nullopt : std::optional(parse_number(key, v));
    else if (key == "export_adjacency") c.export_adjacency = parse_bool(key, v);
    else if (key == "euler_raw") c.euler_raw = parse_bool(key, v);
    else if (key == "normalize_caps") c.normalize_caps = parse_bool(key, v);
    else if (key == "export_scores") c.export_scores = parse_bool(key, v);
    else if (key == "export_contributions") c.export_contributions = parse_bool(key, v);
    else if (key == "export_annual") c.export_annual = parse_bool(key, v);
    else if (key == "export_graphml") c.export_graphml = parse_bool(key, v);
    else if (key == "graphml_date") c.graphml_date = v.empty() ? std::nullopt : std::optional(parse_config_date(key, v));
    else if (key == "covariates") c.covariates = std::string(v);
    else if (key == "lags") {
        c.lags.clear();
        for (const auto& item : parse_list(v)) {
            const auto colon = item.rfind(':');
            if (colon == std::string::npos || colon == 0) {
                throw ConfigError("config 'lags': expected name:lag entries, got '" + item + "'");
            }
            c.lags[item.substr(0, colon)] = static_cast<int>(parse_integer(key, std::string_view(item).substr(colon + 1), 0));
        }
    }
    else if (key == "target") c.target = std::string(v);
    else if (key == "bandwidth") c.bandwidth = v.empty() ? std::nullopt : std::optional(static_cast<std::size_t>(parse_integer(key, v, 0)));
    else if (key == "raw_cases") c.raw_cases = parse_bool(key, v);
    else if (key == "out") c.out_dir = std::string(v);
    else if (key == "threads") c.threads = static_cast<unsigned>(parse_integer(key, v, 0));
    else if (key == "force") c.force = parse_bool(key, v);
    else throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void load_config_file(PipelineConfig& config, const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file '" + path.string() + "'");
    }
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto fields = csv::split(line, '=');
        if (fields.size() == 1 && fields[0].empty()) continue;
        if (fields.size() != 2 || fields[0].empty()) {
            throw ConfigError(path.string() + ":" + std::to_string(number) + ": expected key=value");
        }
        try {
            set_config_value(config, fields[0], fields[1]);
        } catch (const ConfigError& e) {
            throw ConfigError(path.string() + ":" + std::to_string(number) + ": " + e.what());
        }
    }
}

void apply_environment(PipelineConfig& config, const std::function<const char*(const char*)>& lookup) {
    for (const auto key : config_keys()) {
        std::string name = "TAILNET_";
        for (const char ch : key) name += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
        if (const char* value = lookup(name.c_str())) {
            try {
                set_config_value(config, key, value);
            } catch (const ConfigError& e) {
                throw ConfigError("environment " + name + ": " + e.what());
            }
        }
    }
}

std::string file_digest(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InputError("cannot read '" + path.string() + "'");
    }
    Sha256 h;
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    return h.hex();
}

StageReport run_stage(Stage stage, const PipelineConfig& config) {
    StageReport report{stage, {}, {}};
    try {
        fs::create_directories(config.out_dir);
        PipelineConfig effective = config;
        // A simulated panel in the output directory stands in for a missing input.
        const auto simulated = config.out_dir / "input" / "prices.csv";
        if (effective.input.empty() && fs::exists(simulated)) {
            effective.input = simulated;
            effective.input_format = "prices-long";
        }
        StageContext ctx{effective, config.out_dir};
        ArtifactSet artifacts(config.out_dir);
        switch (stage) {
            case Stage::Ingest: stage_ingest(ctx, artifacts, report); break;
            case Stage::Coes: stage_coes(ctx, artifacts, report); break;
            case Stage::Network: stage_network(ctx, artifacts, report); break;
            case Stage::Score: stage_score(ctx, artifacts, report); break;
            case Stage::GraphML: stage_graphml(ctx, artifacts, report); break;
            case Stage::Drivers: stage_drivers(ctx, artifacts, report); break;
        }
        artifacts.flush();
        write_manifest(artifacts, stage, ctx);
        artifacts.commit();
        report.outputs = artifacts.files();
    } catch (const Error& e) {
        throw Error("stage '" + std::string(stage_name(stage)) + "': " + e.what(), e.exit_code());
    } catch (const fs::filesystem_error& e) {
        throw Error("stage '" + std::string(stage_name(stage)) + "': " + e.what(), 2);
    } catch (const std::exception& e) {
        throw Error("stage '" + std::string(stage_name(stage)) + "': " + e.what(), 1);
    }
    return report;
}

std::vector<StageReport> run_pipeline(const PipelineConfig& config, std::span<const Stage> stages) {
    std::vector<StageReport> reports;
    for (const auto s : stages) reports.push_back(run_stage(s, config));
    return reports;
}

std::vector<StageReport> run_pipeline(const PipelineConfig& config) {
    std::vector<Stage> stages{Stage::Ingest, Stage::Coes, Stage::Network, Stage::Score};
    if (config.export_graphml) stages.push_back(Stage::GraphML);
    if (!config.covariates.empty()) stages.push_back(Stage::Drivers);
    return run_pipeline(config, stages);
}

StageReport simulate(const SimulateOptions& options, PipelineConfig& config) {
    try {
        auto spec = synthlab::preset(options.preset, options.assets, options.seed, options.horizon,
                                     options.negative_assets);
        if (options.student_t_dof) {
            spec.innovation = synthlab::Innovation::StudentT;
            spec.dof = *options.student_t_dof;
        }
        ReturnPanel panel = [&] {
            if (!options.switch_day) return synthlab::generate_panel(spec);
            auto post = spec;
            post.factor_vol *= options.post_factor_vol_scale;
            return synthlab::regime_panel(spec, post, *options.switch_day);
        }();

        const auto rel = fs::path("input") / "prices.csv";
        fs::create_directories(config.out_dir / "input");
        {
            ArtifactSet artifacts(config.out_dir);
            auto& out = artifacts.open(rel);
            out << "date,symbol,close,market_cap\n";
            for (const auto& r : synthlab::price_records(panel)) {
                out << format_date(r.date) << ',' << r.symbol << ',' << csv::format_double(r.close) << ','
                    << csv::format_double(r.market_cap) << '\n';
            }
            std::ostringstream spec_text;
            spec_text << "preset=" << options.preset << "\nassets=" << options.assets << "\nhorizon=" << options.horizon
                      << "\nseed=" << options.seed << "\nnegative_assets=" << options.negative_assets
                      << "\nfactor_vol=" << csv::format_double(spec.factor_vol)
                      << "\ninnovation=" << (options.student_t_dof ? "student-t" : "gaussian") << '\n';
            if (options.student_t_dof) spec_text << "dof=" << csv::format_double(*options.student_t_dof) << '\n';
            if (options.switch_day) {
                spec_text << "switch_day=" << *options.switch_day
                          << "\npost_factor_vol_scale=" << csv::format_double(options.post_factor_vol_scale) << '\n';
            }
            artifacts.write(fs::path("input") / "simulation.txt", spec_text.str());
            artifacts.commit();
        }
        config.input = config.out_dir / rel;
        config.input_format = "prices-long";
        config.caps_input.clear();
    } catch (const Error& e) {
        throw Error("stage 'simulate': " + std::string(e.what()), e.exit_code());
    }
    return run_stage(Stage::Ingest, config);
}

}  // namespace tailnet

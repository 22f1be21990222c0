#pragma once

// Generation-quality metrics over instruction/tree corpora: XML tokenization,
// BLEU-4, ROUGE-L, parser validity, and grouped reports.

#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "swarmcmd/bt_model.hpp"

namespace swarmcmd::eval {

using Tokens = std::vector<std::string>;

class EvalError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Inserts spaces around < > / = and " and splits on whitespace. Case is kept.
Tokens tokenize_xml(std::string_view text);

struct BleuResult
{
    double score = 0.0;
    bool degenerate = false; // both inputs empty
};

/// BLEU-4 with uniform weights over orders 1..min(4, |candidate|). A zero
/// clipped count at order n is replaced by 1 / (2 * candidate n-gram count).
BleuResult bleu_detail(const Tokens& candidate, const Tokens& reference);
double bleu(const Tokens& candidate, const Tokens& reference);

std::size_t lcs_length(const Tokens& a, const Tokens& b);
/// LCS F1; 0 when either side is empty.
double rouge_l(const Tokens& candidate, const Tokens& reference);

struct EvalRecord
{
    std::string id;
    std::string instruction;
    std::string reference_xml;
    std::optional<std::string> candidate_xml;
    std::string model_label = "model";
    int shots = 0;

    bool operator==(const EvalRecord&) const = default;
};

struct RecordScores
{
    double bleu = 0.0;
    double rouge_l = 0.0;
    bool syntactic_valid = false;
    std::optional<bt::FailureCategory> failure_category;
};

/// Throws EvalError when the record has no candidate.
RecordScores score_record(const EvalRecord& record,
                          const bt::NodeWhitelist& whitelist = bt::default_whitelist());

struct ScoredRecord
{
    EvalRecord record;
    RecordScores scores;
};

std::vector<ScoredRecord> score_corpus(const std::vector<EvalRecord>& records,
                                       const bt::NodeWhitelist& whitelist = bt::default_whitelist());

using FailureCounts = std::map<bt::FailureCategory, std::size_t>;

struct MetricsReport
{
    // Empty optional means the key was not part of the grouping.
    std::optional<std::string> model_label;
    std::optional<int> shots;
    std::size_t record_count = 0;
    double mean_bleu = 0.0;
    double mean_rouge_l = 0.0;
    double validity_percent = 0.0; // full precision; rounded only when rendered
    // Absent for pre-aggregated summaries whose breakdown is unknown.
    std::optional<FailureCounts> failure_counts;

    bool operator==(const MetricsReport&) const = default;
};

struct GroupBy
{
    bool model = true;
    bool shots = true;
};

/// Parses "model,shots", "model", "shots" or "none".
GroupBy parse_group_by(std::string_view spec);

/// Means per group. Groups appear in first-seen model order, then by shots.
/// Throws EvalError on empty input.
std::vector<MetricsReport> aggregate(const std::vector<ScoredRecord>& records,
                                     GroupBy group_by = {});

/// JSON-lines corpus. References must pass the gate; offending ids are listed
/// in the EvalError message.
std::vector<EvalRecord> parse_corpus(std::istream& in,
                                     const bt::NodeWhitelist& whitelist = bt::default_whitelist());
std::vector<EvalRecord> load_corpus(const std::string& path,
                                    const bt::NodeWhitelist& whitelist = bt::default_whitelist());

enum class ReportFormat
{
    Table,
    Json,
    Csv,
};

std::optional<ReportFormat> report_format_from_string(std::string_view name);

/// "Zero-shot", "One-shot", "Two-shot", "3-shot", or "All" without a shots key.
std::string setting_name(std::optional<int> shots);

struct GridRow
{
    std::string setting;
    std::string metric; // BLEU, ROUGE-L, Syntax
    std::string baseline;
    std::vector<std::string> comparisons;
};

/// Comparison grid: one row per (setting, metric). The first model label is
/// the baseline, later labels are comparisons.
std::vector<GridRow> report_grid(const std::vector<MetricsReport>& reports);

std::string render_report(const std::vector<MetricsReport>& reports, ReportFormat format);

nlohmann::json reports_to_json(const std::vector<MetricsReport>& reports);
/// Accepts the object emitted by render_report(..., Json) or a bare array of
/// groups. Throws EvalError on malformed input.
std::vector<MetricsReport> reports_from_json(const nlohmann::json& doc);
std::vector<MetricsReport> load_reports(const std::string& path);

} // namespace swarmcmd::eval

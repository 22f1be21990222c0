#include "swarmcmd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace swarmcmd::eval {

Tokens tokenize_xml(std::string_view text)
{
    std::string spaced;
    spaced.reserve(text.size() * 2);
    for (char c : text)
    {
        if (c == '<' || c == '>' || c == '/' || c == '=' || c == '"')
        {
            spaced.push_back(' ');
            spaced.push_back(c);
            spaced.push_back(' ');
        }
        else
        {
            spaced.push_back(c);
        }
    }
    Tokens out;
    std::size_t i = 0;
    auto is_space = [](char c) {
        return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
    };
    while (i < spaced.size())
    {
        while (i < spaced.size() && is_space(spaced[i]))
            ++i;
        const std::size_t start = i;
        while (i < spaced.size() && !is_space(spaced[i]))
            ++i;
        if (i > start)
            out.emplace_back(spaced.substr(start, i - start));
    }
    return out;
}

namespace {

using NgramCounts = std::map<std::vector<std::string_view>, std::size_t>;

NgramCounts count_ngrams(const Tokens& tokens, std::size_t n)
{
    NgramCounts counts;
    if (tokens.size() < n)
        return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    {
        std::vector<std::string_view> gram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                           tokens.begin() + static_cast<std::ptrdiff_t>(i + n));
        ++counts[gram];
    }
    return counts;
}

} // namespace

BleuResult bleu_detail(const Tokens& candidate, const Tokens& reference)
{
    if (candidate.empty())
        return {0.0, reference.empty()};

    const std::size_t c = candidate.size();
    const std::size_t r = reference.size();
    const std::size_t max_order = std::min<std::size_t>(4, c);
    double log_sum = 0.0;
    for (std::size_t n = 1; n <= max_order; ++n)
    {
        const NgramCounts cand = count_ngrams(candidate, n);
        const NgramCounts ref = count_ngrams(reference, n);
        std::size_t clipped = 0;
        for (const auto& [gram, count] : cand)
        {
            const auto it = ref.find(gram);
            if (it != ref.end())
                clipped += std::min(count, it->second);
        }
        const double total = static_cast<double>(c - n + 1);
        const double precision =
            clipped == 0 ? 1.0 / (2.0 * total) : static_cast<double>(clipped) / total;
        log_sum += std::log(precision);
    }
    const double bp =
        std::min(1.0, std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c)));
    const double score = bp * std::exp(log_sum / static_cast<double>(max_order));
    return {std::clamp(score, 0.0, 1.0), false};
}

double bleu(const Tokens& candidate, const Tokens& reference)
{
    return bleu_detail(candidate, reference).score;
}

std::size_t lcs_length(const Tokens& a, const Tokens& b)
{
    if (a.empty() || b.empty())
        return 0;
    std::vector<std::size_t> prev(b.size() + 1, 0);
    std::vector<std::size_t> cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i)
    {
        for (std::size_t j = 1; j <= b.size(); ++j)
        {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double rouge_l(const Tokens& candidate, const Tokens& reference)
{
    if (candidate.empty() || reference.empty())
        return 0.0;
    const double lcs = static_cast<double>(lcs_length(candidate, reference));
    const double p = lcs / static_cast<double>(candidate.size());
    const double r = lcs / static_cast<double>(reference.size());
    if (p + r == 0.0)
        return 0.0;
    return 2.0 * p * r / (p + r);
}

RecordScores score_record(const EvalRecord& record, const bt::NodeWhitelist& whitelist)
{
    if (!record.candidate_xml)
        throw EvalError("record '" + record.id + "' has no candidate_xml");
    const Tokens cand = tokenize_xml(*record.candidate_xml);
    const Tokens ref = tokenize_xml(record.reference_xml);
    const bt::ValidationReport report = bt::parse_document(*record.candidate_xml, whitelist);
    RecordScores s;
    s.bleu = bleu(cand, ref);
    s.rouge_l = rouge_l(cand, ref);
    s.syntactic_valid = report.accepted();
    s.failure_category = report.category;
    return s;
}

std::vector<ScoredRecord> score_corpus(const std::vector<EvalRecord>& records,
                                       const bt::NodeWhitelist& whitelist)
{
    std::vector<ScoredRecord> out;
    out.reserve(records.size());
    for (const auto& r : records)
        out.push_back({r, score_record(r, whitelist)});
    return out;
}

GroupBy parse_group_by(std::string_view spec)
{
    if (spec == "none" || spec.empty())
        return {false, false};
    GroupBy g{false, false};
    std::string item;
    std::istringstream in{std::string(spec)};
    while (std::getline(in, item, ','))
    {
        if (item == "model")
            g.model = true;
        else if (item == "shots")
            g.shots = true;
        else
            throw EvalError("unknown group-by key '" + item + "' (expected model, shots)");
    }
    return g;
}

std::vector<MetricsReport> aggregate(const std::vector<ScoredRecord>& records, GroupBy group_by)
{
    if (records.empty())
        throw EvalError("cannot aggregate an empty corpus");

    std::vector<std::string> label_order;
    for (const auto& r : records)
    {
        if (std::find(label_order.begin(), label_order.end(), r.record.model_label) ==
            label_order.end())
            label_order.push_back(r.record.model_label);
    }

    struct Acc
    {
        std::size_t n = 0;
        std::size_t valid = 0;
        double bleu = 0.0;
        double rouge = 0.0;
        FailureCounts failures;
    };
    // Key: (label rank, shots); unused keys collapse to a single value.
    std::map<std::pair<std::size_t, int>, Acc> groups;
    for (const auto& r : records)
    {
        const auto rank = static_cast<std::size_t>(
            std::find(label_order.begin(), label_order.end(), r.record.model_label) -
            label_order.begin());
        const std::pair<std::size_t, int> key{group_by.model ? rank : 0,
                                              group_by.shots ? r.record.shots : 0};
        Acc& acc = groups[key];
        ++acc.n;
        acc.bleu += r.scores.bleu;
        acc.rouge += r.scores.rouge_l;
        if (r.scores.syntactic_valid)
            ++acc.valid;
        else if (r.scores.failure_category)
            ++acc.failures[*r.scores.failure_category];
    }

    std::vector<MetricsReport> out;
    for (const auto& [key, acc] : groups)
    {
        MetricsReport m;
        if (group_by.model)
            m.model_label = label_order[key.first];
        if (group_by.shots)
            m.shots = key.second;
        const double n = static_cast<double>(acc.n);
        m.record_count = acc.n;
        m.mean_bleu = acc.bleu / n;
        m.mean_rouge_l = acc.rouge / n;
        m.validity_percent = 100.0 * static_cast<double>(acc.valid) / n;
        m.failure_counts = acc.failures;
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<EvalRecord> parse_corpus(std::istream& in, const bt::NodeWhitelist& whitelist)
{
    std::vector<EvalRecord> out;
    std::vector<std::string> bad_refs;
    std::set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line))
    {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        const std::string where = "line " + std::to_string(line_no);
        nlohmann::json doc;
        try
        {
            doc = nlohmann::json::parse(line);
        }
        catch (const nlohmann::json::parse_error& e)
        {
            throw EvalError(where + ": invalid JSON: " + e.what());
        }
        if (!doc.is_object())
            throw EvalError(where + ": expected a JSON object");
        auto req = [&](const char* key) -> std::string {
            const auto it = doc.find(key);
            if (it == doc.end() || !it->is_string())
                throw EvalError(where + ": missing string field '" + key + "'");
            return it->get<std::string>();
        };
        EvalRecord rec;
        rec.id = req("id");
        rec.instruction = req("instruction");
        rec.reference_xml = req("reference_xml");
        if (const auto it = doc.find("candidate_xml"); it != doc.end() && !it->is_null())
        {
            if (!it->is_string())
                throw EvalError(where + ": candidate_xml must be a string");
            rec.candidate_xml = it->get<std::string>();
        }
        if (const auto it = doc.find("model_label"); it != doc.end() && !it->is_null())
        {
            if (!it->is_string())
                throw EvalError(where + ": model_label must be a string");
            rec.model_label = it->get<std::string>();
        }
        if (const auto it = doc.find("shots"); it != doc.end() && !it->is_null())
        {
            if (!it->is_number_integer() || it->get<int>() < 0 || it->get<int>() > 2)
                throw EvalError(where + ": shots must be 0, 1 or 2");
            rec.shots = it->get<int>();
        }
        if (!seen.insert(rec.id).second)
            throw EvalError(where + ": duplicate id '" + rec.id + "'");
        if (!bt::parse_document(rec.reference_xml, whitelist).accepted())
            bad_refs.push_back(rec.id);
        out.push_back(std::move(rec));
    }
    if (!bad_refs.empty())
    {
        std::string msg = "invalid reference_xml in record(s):";
        for (const auto& id : bad_refs)
            msg += " " + id;
        throw EvalError(msg);
    }
    return out;
}

std::vector<EvalRecord> load_corpus(const std::string& path, const bt::NodeWhitelist& whitelist)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw EvalError("cannot open corpus '" + path + "'");
    return parse_corpus(in, whitelist);
}

std::optional<ReportFormat> report_format_from_string(std::string_view name)
{
    if (name == "table")
        return ReportFormat::Table;
    if (name == "json")
        return ReportFormat::Json;
    if (name == "csv")
        return ReportFormat::Csv;
    return std::nullopt;
}

std::string setting_name(std::optional<int> shots)
{
    if (!shots)
        return "All";
    switch (*shots)
    {
    case 0: return "Zero-shot";
    case 1: return "One-shot";
    case 2: return "Two-shot";
    default: return std::to_string(*shots) + "-shot";
    }
}

namespace {

std::string fixed3(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

std::string percent(double v)
{
    return std::to_string(static_cast<long long>(std::llround(v))) + "%";
}

std::vector<std::string> labels_of(const std::vector<MetricsReport>& reports)
{
    std::vector<std::string> labels;
    for (const auto& r : reports)
    {
        const std::string label = r.model_label.value_or("all");
        if (std::find(labels.begin(), labels.end(), label) == labels.end())
            labels.push_back(label);
    }
    return labels;
}

std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s)
    {
        if (c == '"')
            out += '"';
        out += c;
    }
    return out + "\"";
}

} // namespace

std::vector<GridRow> report_grid(const std::vector<MetricsReport>& reports)
{
    const std::vector<std::string> labels = labels_of(reports);
    std::vector<std::optional<int>> settings;
    for (const auto& r : reports)
    {
        if (std::find(settings.begin(), settings.end(), r.shots) == settings.end())
            settings.push_back(r.shots);
    }
    std::sort(settings.begin(), settings.end());

    auto find = [&](const std::string& label,
                    std::optional<int> shots) -> const MetricsReport* {
        for (const auto& r : reports)
        {
            if (r.model_label.value_or("all") == label && r.shots == shots)
                return &r;
        }
        return nullptr;
    };

    std::vector<GridRow> rows;
    for (const auto& shots : settings)
    {
        for (const char* metric : {"BLEU", "ROUGE-L", "Syntax"})
        {
            std::vector<std::string> cells;
            for (const auto& label : labels)
            {
                const MetricsReport* r = find(label, shots);
                if (r == nullptr)
                    cells.emplace_back("-");
                else if (std::string_view(metric) == "BLEU")
                    cells.push_back(fixed3(r->mean_bleu));
                else if (std::string_view(metric) == "ROUGE-L")
                    cells.push_back(fixed3(r->mean_rouge_l));
                else
                    cells.push_back(percent(r->validity_percent));
            }
            GridRow row;
            row.setting = setting_name(shots);
            row.metric = metric;
            row.baseline = cells.empty() ? "-" : cells.front();
            row.comparisons.assign(cells.begin() + (cells.empty() ? 0 : 1), cells.end());
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

nlohmann::json reports_to_json(const std::vector<MetricsReport>& reports)
{
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& r : reports)
    {
        nlohmann::json g;
        g["model_label"] = r.model_label ? nlohmann::json(*r.model_label) : nlohmann::json();
        g["shots"] = r.shots ? nlohmann::json(*r.shots) : nlohmann::json();
        g["records"] = r.record_count;
        g["bleu"] = r.mean_bleu;
        g["rouge_l"] = r.mean_rouge_l;
        g["validity_percent"] = r.validity_percent;
        if (r.failure_counts)
        {
            nlohmann::json f = nlohmann::json::object();
            for (auto cat : {bt::FailureCategory::NonXml, bt::FailureCategory::MalformedXml,
                             bt::FailureCategory::IncompleteStructure,
                             bt::FailureCategory::UnsupportedNode})
            {
                const auto it = r.failure_counts->find(cat);
                f[std::string(bt::to_string(cat))] =
                    it == r.failure_counts->end() ? 0 : it->second;
            }
            g["failures"] = f;
        }
        else
        {
            g["failures"] = nullptr;
        }
        groups.push_back(std::move(g));
    }
    return groups;
}

std::vector<MetricsReport> reports_from_json(const nlohmann::json& doc)
{
    const nlohmann::json* groups = &doc;
    if (doc.is_object())
    {
        const auto it = doc.find("groups");
        if (it == doc.end())
            throw EvalError("report JSON has no \"groups\" array");
        groups = &*it;
    }
    if (!groups->is_array() || groups->empty())
        throw EvalError("report groups must be a non-empty array");

    std::vector<MetricsReport> out;
    for (const auto& g : *groups)
    {
        if (!g.is_object())
            throw EvalError("report group must be an object");
        auto number = [&](const char* key) {
            const auto it = g.find(key);
            if (it == g.end() || !it->is_number())
                throw EvalError(std::string("report group lacks numeric '") + key + "'");
            return it->get<double>();
        };
        MetricsReport m;
        if (const auto it = g.find("model_label"); it != g.end() && !it->is_null())
        {
            if (!it->is_string())
                throw EvalError("model_label must be a string");
            m.model_label = it->get<std::string>();
        }
        if (const auto it = g.find("shots"); it != g.end() && !it->is_null())
        {
            if (!it->is_number_integer())
                throw EvalError("shots must be an integer");
            m.shots = it->get<int>();
        }
        const auto records = g.find("records");
        if (records == g.end() || !records->is_number_unsigned() || records->get<std::size_t>() == 0)
            throw EvalError("report group needs a positive integer 'records'");
        m.record_count = records->get<std::size_t>();
        m.mean_bleu = number("bleu");
        m.mean_rouge_l = number("rouge_l");
        m.validity_percent = number("validity_percent");
        if (m.mean_bleu < 0.0 || m.mean_bleu > 1.0 || m.mean_rouge_l < 0.0 ||
            m.mean_rouge_l > 1.0 || m.validity_percent < 0.0 || m.validity_percent > 100.0)
            throw EvalError("report group value out of range");
        if (const auto it = g.find("failures"); it != g.end() && !it->is_null())
        {
            if (!it->is_object())
                throw EvalError("failures must be an object");
            FailureCounts counts;
            for (const auto& [name, value] : it->items())
            {
                const auto cat = bt::failure_category_from_string(name);
                if (!cat || !value.is_number_unsigned())
                    throw EvalError("bad failure count entry '" + name + "'");
                if (value.get<std::size_t>() > 0)
                    counts[*cat] = value.get<std::size_t>();
            }
            m.failure_counts = counts;
        }
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<MetricsReport> load_reports(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw EvalError("cannot open report '" + path + "'");
    try
    {
        return reports_from_json(nlohmann::json::parse(in));
    }
    catch (const nlohmann::json::exception& e)
    {
        throw EvalError("report '" + path + "': " + e.what());
    }
}

std::string render_report(const std::vector<MetricsReport>& reports, ReportFormat format)
{
    const std::vector<std::string> labels = labels_of(reports);
    const std::vector<GridRow> grid = report_grid(reports);

    if (format == ReportFormat::Json)
    {
        nlohmann::json doc;
        doc["baseline"] = labels.empty() ? nlohmann::json() : nlohmann::json(labels.front());
        doc["comparisons"] = nlohmann::json(
            std::vector<std::string>(labels.begin() + (labels.empty() ? 0 : 1), labels.end()));
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& row : grid)
        {
            rows.push_back({{"setting", row.setting},
                            {"metric", row.metric},
                            {"baseline", row.baseline},
                            {"comparison", row.comparisons}});
        }
        doc["grid"] = rows;
        doc["groups"] = reports_to_json(reports);
        return doc.dump(2) + "\n";
    }

    std::vector<std::string> header{"setting", "metric", "baseline"};
    if (labels.size() <= 2)
        header.emplace_back("comparison");
    else
        for (std::size_t i = 1; i < labels.size(); ++i)
            header.push_back("comparison_" + std::to_string(i));

    auto cells_of = [&](const GridRow& row) {
        std::vector<std::string> cells{row.setting, row.metric, row.baseline};
        if (row.comparisons.empty())
            cells.emplace_back("-");
        cells.insert(cells.end(), row.comparisons.begin(), row.comparisons.end());
        return cells;
    };

    std::ostringstream out;
    if (format == ReportFormat::Csv)
    {
        for (std::size_t i = 0; i < header.size(); ++i)
            out << (i ? "," : "") << header[i];
        out << "\n";
        for (const auto& row : grid)
        {
            const auto cells = cells_of(row);
            for (std::size_t i = 0; i < cells.size(); ++i)
                out << (i ? "," : "") << csv_field(cells[i]);
            out << "\n";
        }
        return out.str();
    }

    // Plain-text table; column titles name the model labels.
    std::vector<std::string> titles{"Setting", "Metric"};
    for (std::size_t i = 0; i < labels.size(); ++i)
        titles.push_back((i == 0 ? "Baseline (" : "Comparison (") + labels[i] + ")");
    if (labels.size() == 1)
        titles.emplace_back("Comparison");
    std::vector<std::vector<std::string>> table{titles};
    for (const auto& row : grid)
        table.push_back(cells_of(row));
    std::vector<std::size_t> widths(titles.size(), 0);
    for (const auto& r : table)
        for (std::size_t i = 0; i < r.size() && i < widths.size(); ++i)
            widths[i] = std::max(widths[i], r[i].size());
    for (std::size_t n = 0; n < table.size(); ++n)
    {
        const auto& r = table[n];
        for (std::size_t i = 0; i < r.size(); ++i)
        {
            if (i > 0)
                out << "  ";
            if (i + 1 == r.size())
                out << r[i];
            else
                out << std::left << std::setw(static_cast<int>(widths[i])) << r[i];
        }
        out << "\n";
        if (n == 0)
        {
            std::size_t total = 0;
            for (auto w : widths)
                total += w;
            out << std::string(total + 2 * (widths.size() - 1), '-') << "\n";
        }
    }

    bool any_failures = false;
    for (const auto& r : reports)
        any_failures = any_failures || (r.failure_counts && !r.failure_counts->empty());
    out << "\n";
    for (const auto& r : reports)
    {
        out << r.model_label.value_or("all") << " / " << setting_name(r.shots) << ": "
            << r.record_count << " records";
        if (any_failures && r.failure_counts)
        {
            for (const auto& [cat, count] : *r.failure_counts)
                out << ", " << bt::to_string(cat) << "=" << count;
        }
        out << "\n";
    }
    return out.str();
}

} // namespace swarmcmd::eval

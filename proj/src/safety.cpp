#include "swarmcmd/safety.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "embedded_data.hpp"

namespace swarmcmd::nl {

std::vector<std::string> lowercase_words(std::string_view text)
{
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text)
    {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c) != 0 || ch == '\'')
        {
            cur.push_back(static_cast<char>(std::tolower(c)));
        }
        else if (!cur.empty())
        {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty())
        out.push_back(std::move(cur));
    return out;
}

bool is_stopword(std::string_view word)
{
    static const std::set<std::string, std::less<>> stop{
        "a",     "about", "above",  "after", "again", "all",   "also",  "am",    "an",
        "and",   "any",   "are",    "as",    "at",    "be",    "been",  "before", "being",
        "but",   "by",    "can",    "could", "did",   "do",    "does",  "doing", "for",
        "from",  "had",   "has",    "have",  "he",    "her",   "here",  "him",   "his",
        "how",   "i",     "if",     "in",    "into",  "is",    "it",    "it's",  "its",
        "itself", "just", "me",     "my",    "no",    "nor",   "not",   "now",   "of",
        "off",   "on",    "once",   "only",  "or",    "other", "our",   "out",   "over",
        "please", "she",  "should", "so",    "some",  "such",  "than",  "that",  "the",
        "their", "them",  "then",   "there", "these", "they",  "this",  "those", "through",
        "to",    "too",   "under",  "until", "up",    "very",  "was",   "we",    "were",
        "what",  "when",  "where",  "which", "while", "who",   "whom",  "why",   "will",
        "with",  "would", "you",    "your",  "yours", "yourselves"};
    return stop.count(word) > 0;
}

std::vector<std::string> content_words(std::string_view text)
{
    auto words = lowercase_words(text);
    words.erase(std::remove_if(words.begin(), words.end(),
                               [](const std::string& w) { return is_stopword(w); }),
                words.end());
    return words;
}

const std::set<std::string>& domain_vocabulary()
{
    static const std::set<std::string> vocab{
        // motion and navigation
        "move", "moving", "movement", "go", "head", "travel", "drive", "fly", "navigate",
        "wander", "wandering", "roam", "explore", "patrol", "drift", "search", "find", "locate",
        "look", "approach", "toward", "towards", "reach", "reached", "reaching", "arrive",
        "return", "follow", "forward", "back", "left", "right", "turn", "steer", "path", "route",
        "way", "clear", "around",
        // obstacles and targets
        "obstacle", "obstacles", "avoid", "avoiding", "dodge", "detect", "detected", "detects",
        "target", "targets", "goal", "goals", "sensor", "sense",
        // formation and coordination
        "form", "formation", "line", "row", "column", "align", "aligned", "alignment", "heading",
        "headings", "direction", "synchronize", "sync", "group", "swarm", "agents", "agent",
        "robots", "robot", "drones", "drone", "neighbors", "neighbours", "together", "gather",
        "spread", "center", "centre", "middle",
        // signaling and status
        "color", "colour", "change", "signal", "light", "lights", "led", "leds", "glow", "red",
        "green", "blue", "yellow", "white", "status", "report", "check", "verify",
        // stopping
        "stop", "halt", "freeze", "hold", "position", "stay", "still", "wait", "pause"};
    return vocab;
}

// ---------------------------------------------------------------------------
// Blocklist
// ---------------------------------------------------------------------------

namespace {

const std::string kGap = "...";

std::vector<std::string> pattern_tokens(const std::string& line)
{
    // Normalize U+2026 to "..." and split it off neighbouring words.
    std::string norm;
    for (std::size_t i = 0; i < line.size(); ++i)
    {
        if (line.compare(i, 3, "\xE2\x80\xA6") == 0)
        {
            norm += " ... ";
            i += 2;
        }
        else if (line.compare(i, 3, "...") == 0)
        {
            norm += " ... ";
            i += 2;
        }
        else
        {
            norm.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(line[i]))));
        }
    }
    std::vector<std::string> tokens;
    std::istringstream in(norm);
    for (std::string t; in >> t;)
    {
        if (t == kGap)
        {
            if (!tokens.empty() && tokens.back() != kGap)
                tokens.push_back(kGap);
            continue;
        }
        tokens.push_back(t);
    }
    while (!tokens.empty() && tokens.back() == kGap)
        tokens.pop_back();
    return tokens;
}

bool word_matches(const std::string& pattern, const std::string& word)
{
    if (!pattern.empty() && pattern.back() == '*')
        return word.compare(0, pattern.size() - 1, pattern, 0, pattern.size() - 1) == 0;
    return pattern == word;
}

bool match_at(const std::vector<std::string>& pat, std::size_t p, const std::vector<std::string>& words,
              std::size_t w)
{
    if (p == pat.size())
        return true;
    if (pat[p] == kGap)
    {
        for (std::size_t k = w; k <= words.size(); ++k)
        {
            if (match_at(pat, p + 1, words, k))
                return true;
        }
        return false;
    }
    return w < words.size() && word_matches(pat[p], words[w]) && match_at(pat, p + 1, words, w + 1);
}

} // namespace

Blocklist::Blocklist(const std::vector<std::string>& patterns)
{
    for (const auto& line : patterns)
    {
        auto tokens = pattern_tokens(line);
        while (!tokens.empty() && tokens.front() == kGap)
            tokens.erase(tokens.begin());
        if (tokens.empty())
            continue;
        patterns_.push_back({line, std::move(tokens)});
    }
}

Blocklist Blocklist::parse(std::istream& in)
{
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);)
    {
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos)
            continue;
        const auto last = line.find_last_not_of(" \t\r");
        lines.push_back(line.substr(first, last - first + 1));
    }
    return Blocklist(lines);
}

Blocklist Blocklist::load(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::invalid_argument("cannot open blocklist '" + path + "'");
    return parse(in);
}

std::optional<std::string> Blocklist::match(std::string_view text) const
{
    const auto words = lowercase_words(text);
    for (const auto& p : patterns_)
    {
        for (std::size_t start = 0; start < words.size(); ++start)
        {
            if (match_at(p.tokens, 0, words, start))
                return p.source;
        }
    }
    return std::nullopt;
}

const Blocklist& default_blocklist()
{
    static const Blocklist list = [] {
        std::istringstream in{std::string(detail::kDefaultBlocklist)};
        return Blocklist::parse(in);
    }();
    return list;
}

// ---------------------------------------------------------------------------
// Verdicts
// ---------------------------------------------------------------------------

std::string_view to_string(SafetyDecision decision)
{
    return decision == SafetyDecision::Allow ? "Allow" : "Reject";
}

std::string_view to_string(SafetySource source)
{
    return source == SafetySource::ExternalClassifier ? "external-classifier" : "rule-fallback";
}

nlohmann::json SafetyVerdict::to_json() const
{
    return {{"decision", to_string(decision)}, {"reason", reason}, {"source", to_string(source)}};
}

SafetyVerdict interpret_classifier_reply(const std::string& reply)
{
    const auto words = lowercase_words(reply);
    SafetyVerdict v;
    v.source = SafetySource::ExternalClassifier;
    if (!words.empty() && words.front() == "safe")
    {
        v.decision = SafetyDecision::Allow;
        v.reason = "classified safe";
        return v;
    }
    v.decision = SafetyDecision::Reject;
    if (!words.empty() && words.front() == "unsafe")
    {
        std::string detail = reply.substr(reply.find_first_not_of(" \t\r\n"));
        detail = detail.substr(6);
        const auto first = detail.find_first_not_of(" \t\r\n:,-");
        v.reason = first == std::string::npos
                       ? "classified unsafe"
                       : "classified unsafe: " + detail.substr(first, detail.find_last_not_of(" \t\r\n") - first + 1);
        return v;
    }
    v.reason = "unrecognized safety classifier reply";
    return v;
}

SafetyGate::SafetyGate(Blocklist blocklist, std::shared_ptr<TextEndpoint> classifier)
    : blocklist_(std::move(blocklist)), classifier_(std::move(classifier))
{
}

SafetyVerdict SafetyGate::check(const std::string& text, std::optional<StageError>* error) const
{
    if (classifier_)
    {
        try
        {
            EndpointRequest request;
            request.text = text;
            return interpret_classifier_reply(classifier_->complete(request, "safety").text);
        }
        catch (const StageError& e)
        {
            if (error != nullptr)
                *error = e;
        }
        catch (const std::exception& e)
        {
            if (error != nullptr)
                *error = StageError("safety", e.what(), 1, true);
        }
        return {SafetyDecision::Reject, "safety service unavailable",
                SafetySource::ExternalClassifier};
    }

    if (const auto hit = blocklist_.match(text))
        return {SafetyDecision::Reject, "blocked pattern '" + *hit + "'", SafetySource::RuleFallback};

    const auto& vocab = domain_vocabulary();
    for (const auto& w : content_words(text))
    {
        if (vocab.count(w) > 0)
            return {SafetyDecision::Allow, "in-domain term '" + w + "'", SafetySource::RuleFallback};
    }
    return {SafetyDecision::Reject, "outside the swarm-control domain", SafetySource::RuleFallback};
}

} // namespace swarmcmd::nl

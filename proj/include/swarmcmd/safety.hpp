#pragma once

// Pre-generation safety gate: an external classifier when configured
// (fail-closed), otherwise a blocklist plus an out-of-domain rule.

#include <istream>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "swarmcmd/endpoints.hpp"

namespace swarmcmd::nl {

/// Lowercased runs of ASCII letters, digits and apostrophes.
std::vector<std::string> lowercase_words(std::string_view text);
bool is_stopword(std::string_view word);
/// lowercase_words minus stopwords.
std::vector<std::string> content_words(std::string_view text);

/// Words that mark a command as belonging to the swarm-control domain.
const std::set<std::string>& domain_vocabulary();

/// One pattern per line; '#' starts a comment. Words match whole words; a
/// trailing '*' matches any suffix; "..." (or U+2026) matches any gap of
/// zero or more words.
class Blocklist
{
public:
    Blocklist() = default;
    explicit Blocklist(const std::vector<std::string>& patterns);

    static Blocklist parse(std::istream& in);
    static Blocklist load(const std::string& path);

    /// The first matching pattern as written, or nullopt.
    [[nodiscard]] std::optional<std::string> match(std::string_view text) const;
    [[nodiscard]] std::size_t size() const { return patterns_.size(); }

private:
    struct Pattern
    {
        std::string source;
        std::vector<std::string> tokens; // "..." marks a gap
    };
    std::vector<Pattern> patterns_;
};

const Blocklist& default_blocklist();

enum class SafetyDecision
{
    Allow,
    Reject,
};

enum class SafetySource
{
    ExternalClassifier,
    RuleFallback,
};

std::string_view to_string(SafetyDecision decision);
std::string_view to_string(SafetySource source);

struct SafetyVerdict
{
    SafetyDecision decision = SafetyDecision::Reject;
    std::string reason;
    SafetySource source = SafetySource::RuleFallback;

    [[nodiscard]] bool allowed() const { return decision == SafetyDecision::Allow; }
    [[nodiscard]] nlohmann::json to_json() const;
    bool operator==(const SafetyVerdict&) const = default;
};

/// Classifier reply: "safe" allows; "unsafe" (optionally followed by
/// categories) rejects; anything else rejects as unrecognized.
SafetyVerdict interpret_classifier_reply(const std::string& reply);

class SafetyGate
{
public:
    explicit SafetyGate(Blocklist blocklist = default_blocklist(),
                        std::shared_ptr<TextEndpoint> classifier = nullptr);

    /// Never throws: classifier failure yields Reject "safety service unavailable".
    /// `error` receives the underlying stage error when one occurred.
    SafetyVerdict check(const std::string& text, std::optional<StageError>* error = nullptr) const;

    [[nodiscard]] bool has_classifier() const { return classifier_ != nullptr; }

private:
    Blocklist blocklist_;
    std::shared_ptr<TextEndpoint> classifier_;
};

} // namespace swarmcmd::nl

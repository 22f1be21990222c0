#pragma once

// Synthetic instruction/tree corpus generator driven by a JSON template bank.

#include <cstdint>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "swarmcmd/bt_model.hpp"

namespace swarmcmd::datagen {

class DatagenError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

struct BehaviorTemplate
{
    std::string name;
    bt::NodeKind kind = bt::NodeKind::ActionLeaf;
    double weight = 1.0;
    // Actions: imperative phrases ("wander around"). Conditions: clauses
    // ("an obstacle is detected"). Slots like {color} name a param.
    std::vector<std::string> phrases;
    // Values drawn uniformly for each slot.
    std::map<std::string, std::vector<std::string>> params;

    bool operator==(const BehaviorTemplate&) const = default;
};

/// Connective patterns; {a}, {b}, {c} are sub-instructions, {cond} a clause.
struct Connectives
{
    std::vector<std::string> check;     // standalone condition, uses {cond}
    std::vector<std::string> guard;     // "if {cond}, {a}"
    std::vector<std::string> sequence;  // "{a}, then {b}"
    std::vector<std::string> fallback;  // "{a}; otherwise {b}"
    std::vector<std::string> unless;    // "unless {cond}, {b}"

    bool operator==(const Connectives&) const = default;
};

struct TemplateBank
{
    std::string version;
    std::vector<BehaviorTemplate> behaviors;
    Connectives connectives;

    /// Throws DatagenError when a behavior is unknown to the whitelist, has
    /// the wrong kind, a non-positive weight, no phrases, or illegal params.
    void validate(const bt::NodeWhitelist& whitelist) const;

    static TemplateBank from_json(const nlohmann::json& doc);
    static TemplateBank load(const std::string& path);
    [[nodiscard]] nlohmann::json to_json() const;
    /// Normalized weights by behavior name.
    [[nodiscard]] std::map<std::string, double> weight_shares() const;

    bool operator==(const TemplateBank&) const = default;
};

/// Bank covering every entry of the default whitelist with uniform weights.
const TemplateBank& default_bank();

struct CorpusPair
{
    std::string id;
    std::string instruction;
    std::string reference_xml;

    bool operator==(const CorpusPair&) const = default;
};

/// Independent stream per record index: mt19937_64 seeded by splitmix64.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/// n >= 1. Each record draws 1 to 3 leaves by weight (with replacement) and a
/// structure fitting that count; the instruction and tree come from the same
/// draw. Deterministic under seed.
std::vector<CorpusPair> generate_corpus(std::size_t n, std::uint64_t seed,
                                        const TemplateBank& bank = default_bank(),
                                        const bt::NodeWhitelist& whitelist = bt::default_whitelist());

/// Leaf-name occurrence counts across reference trees.
std::map<std::string, std::size_t> behavior_histogram(const std::vector<CorpusPair>& corpus);

/// One sorted-key JSON object per line, loadable by eval::load_corpus.
void write_jsonl(std::ostream& out, const std::vector<CorpusPair>& corpus);

struct Split
{
    std::vector<CorpusPair> train;
    std::vector<CorpusPair> validation;
    std::vector<CorpusPair> test;
};

/// Seeded shuffle, then floor(80%) train, floor(10%) validation, rest test.
Split split_corpus(const std::vector<CorpusPair>& corpus, std::uint64_t seed);

} // namespace swarmcmd::datagen

#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "support/fuzz.hpp"
#include "swarmcmd/bt_model.hpp"
#include "swarmcmd/scenarios.hpp"

using namespace swarmcmd;
using namespace swarmcmd::bt;

namespace {

const std::string kS1 = R"(<root main_tree_to_execute="MainTree">
  <BehaviorTree ID="MainTree">
    <Fallback>
      <Sequence>
        <ObstacleDetected/>
        <AvoidObstacle/>
        <ChangeColor color="green"/>
      </Sequence>
      <Wander/>
    </Fallback>
  </BehaviorTree>
  <TreeNodesModel>
    <Condition ID="ObstacleDetected"/>
    <Action ID="AvoidObstacle"/>
    <Action ID="ChangeColor"/>
    <Action ID="Wander"/>
  </TreeNodesModel>
</root>)";

std::string read(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST(Gate, AcceptsReferenceTree)
{
    const auto r = parse_document(kS1);
    ASSERT_TRUE(r.accepted());
    EXPECT_EQ(r.outcome(), Outcome::Accepted);
    ASSERT_TRUE(r.tree.has_value());
    EXPECT_EQ(r.tree->tree_id, "MainTree");
    EXPECT_EQ(r.tree->root_node.kind, NodeKind::Fallback);
    EXPECT_EQ(r.tree->root_node.children[0].children[2].params.at("color"), "green");
    EXPECT_EQ(r.tree->root_node.children[0].children[0].kind, NodeKind::ConditionLeaf);
    EXPECT_TRUE(r.diagnostics.empty());
}

TEST(Gate, ProseAroundXmlIsNonXml)
{
    EXPECT_EQ(classify_failure("Sure! Here is your tree: " + kS1), Outcome::NonXml);
    EXPECT_EQ(classify_failure(kS1 + "\nHope this helps"), Outcome::NonXml);
    EXPECT_EQ(classify_failure("```xml\n" + kS1 + "\n```"), Outcome::NonXml);
    EXPECT_EQ(classify_failure(""), Outcome::NonXml);
    EXPECT_EQ(classify_failure("<>"), Outcome::NonXml);
}

TEST(Gate, UnclosedTagsAreMalformed)
{
    EXPECT_EQ(classify_failure("<root><BehaviorTree>"), Outcome::MalformedXml);
}

TEST(Gate, MissingModelIsIncomplete)
{
    const auto r = parse_document(
        "<root><BehaviorTree><Wander/></BehaviorTree></root>");
    EXPECT_EQ(r.outcome(), Outcome::IncompleteStructure);
    ASSERT_FALSE(r.diagnostics.empty());
}

TEST(Gate, TwoBehaviorTreesAreIncomplete)
{
    EXPECT_EQ(classify_failure("<root><BehaviorTree><Wander/></BehaviorTree><BehaviorTree><Wander/>"
                               "</BehaviorTree><TreeNodesModel><Action ID=\"Wander\"/>"
                               "</TreeNodesModel></root>"),
              Outcome::IncompleteStructure);
}

TEST(Gate, UnknownLeafIsUnsupported)
{
    const auto r = parse_document("<root><BehaviorTree><LaunchRocket/></BehaviorTree><TreeNodesModel>"
                                  "<Action ID=\"LaunchRocket\"/></TreeNodesModel></root>");
    EXPECT_EQ(r.outcome(), Outcome::UnsupportedNode);
    EXPECT_FALSE(r.tree.has_value());
}

TEST(Gate, PrecedenceFirstMatchWins)
{
    // Incomplete and unsupported at once: structure is checked first.
    EXPECT_EQ(classify_failure("<root><BehaviorTree><LaunchRocket/></BehaviorTree></root>"),
              Outcome::IncompleteStructure);
    // Malformed and with prose: prose first.
    EXPECT_EQ(classify_failure("Here: <root><BehaviorTree>"), Outcome::NonXml);
}

TEST(Gate, EmptyControlNodeIsIncomplete)
{
    EXPECT_EQ(classify_failure("<root><BehaviorTree><Sequence></Sequence></BehaviorTree>"
                               "<TreeNodesModel/></root>"),
              Outcome::IncompleteStructure);
}

TEST(Gate, DuplicateDeclarations)
{
    const std::string ok = "<root><BehaviorTree><Wander/></BehaviorTree><TreeNodesModel>"
                           "<Action ID=\"Wander\"/><Action ID=\"Wander\"/></TreeNodesModel></root>";
    EXPECT_EQ(classify_failure(ok), Outcome::Accepted);
    const std::string clash = "<root><BehaviorTree><Wander/></BehaviorTree><TreeNodesModel>"
                              "<Action ID=\"Wander\"/><Condition ID=\"Wander\"/></TreeNodesModel></root>";
    EXPECT_EQ(classify_failure(clash), Outcome::IncompleteStructure);
}

TEST(Gate, ParamRules)
{
    auto doc = [](const std::string& leaf) {
        return "<root><BehaviorTree>" + leaf +
               "</BehaviorTree><TreeNodesModel><Action ID=\"ChangeColor\"/><Action ID=\"Wander\"/>"
               "</TreeNodesModel></root>";
    };
    for (const auto& c : allowed_colors())
        EXPECT_EQ(classify_failure(doc("<ChangeColor color=\"" + c + "\"/>")), Outcome::Accepted) << c;
    EXPECT_EQ(classify_failure(doc("<ChangeColor color=\"purple\"/>")), Outcome::UnsupportedNode);
    EXPECT_EQ(classify_failure(doc("<ChangeColor/>")), Outcome::UnsupportedNode);
    EXPECT_EQ(classify_failure(doc("<Wander fast=\"1\"/>")), Outcome::UnsupportedNode);
}

TEST(Gate, WhitelistIsTheOnlyAuthority)
{
    // Same document, different verdicts depending only on the whitelist.
    const std::string doc = "<root><BehaviorTree><Hover/></BehaviorTree><TreeNodesModel>"
                            "<Action ID=\"Hover\"/></TreeNodesModel></root>";
    EXPECT_EQ(classify_failure(doc), Outcome::UnsupportedNode);
    const NodeWhitelist custom({{"Hover", {}}}, {});
    EXPECT_EQ(classify_failure(doc, custom), Outcome::Accepted);
}

TEST(Gate, DefaultWhitelistHasThirteenEntries)
{
    EXPECT_EQ(default_whitelist().size(), 13u);
    EXPECT_EQ(default_whitelist().kind_of("TargetDetected"), NodeKind::ConditionLeaf);
    EXPECT_EQ(default_whitelist().kind_of("FreezeMovement"), NodeKind::ActionLeaf);
    EXPECT_FALSE(default_whitelist().kind_of("Sequence").has_value());
}

TEST(Gate, WhitelistFileMatchesDefault)
{
    const auto loaded = NodeWhitelist::load(std::string(SWARMCMD_SOURCE_DIR) + "/data/whitelist.json");
    EXPECT_EQ(loaded, default_whitelist());
    EXPECT_EQ(NodeWhitelist::from_json(default_whitelist().to_json()), default_whitelist());
}

TEST(Gate, WhitelistRejectsOverlapAndReservedNames)
{
    EXPECT_THROW(NodeWhitelist({{"A", {}}}, {{"A", {}}}), WhitelistError);
    EXPECT_THROW(NodeWhitelist({{"Sequence", {}}}, {}), WhitelistError);
    EXPECT_THROW(NodeWhitelist({{"not valid", {}}}, {}), WhitelistError);
}

TEST(Gate, LabeledCorpusAgreement)
{
    const std::filesystem::path root = std::filesystem::path(SWARMCMD_SOURCE_DIR) / "tests/data/parser_corpus";
    const std::map<std::string, Outcome> labels{
        {"accepted", Outcome::Accepted},
        {"non_xml", Outcome::NonXml},
        {"malformed_xml", Outcome::MalformedXml},
        {"incomplete_structure", Outcome::IncompleteStructure},
        {"unsupported_node", Outcome::UnsupportedNode},
    };
    std::size_t total = 0;
    for (const auto& [dir, want] : labels)
    {
        std::size_t n = 0;
        for (const auto& entry : std::filesystem::directory_iterator(root / dir))
        {
            ++n;
            EXPECT_EQ(classify_failure(read(entry.path())), want) << entry.path();
        }
        EXPECT_GE(n, 8u) << dir;
        total += n;
    }
    EXPECT_GE(total, 40u);
}

TEST(Gate, ClassifyAgreesWithParseDocument)
{
    fuzz::Generator gen(11);
    for (int i = 0; i < 500; ++i)
    {
        const std::string s = gen.next();
        EXPECT_EQ(classify_failure(s), parse_document(s).outcome());
    }
}

TEST(Gate, FuzzTotality)
{
    fuzz::Generator gen(12345);
    for (int i = 0; i < 2000; ++i)
    {
        const std::string s = gen.next();
        ValidationReport r;
        ASSERT_NO_THROW(r = parse_document(s));
        const int o = static_cast<int>(r.outcome());
        ASSERT_GE(o, 0);
        ASSERT_LE(o, 4);
        EXPECT_EQ(r.accepted(), r.tree.has_value());
        EXPECT_EQ(r.accepted(), !r.category.has_value());
        if (!r.accepted())
            EXPECT_FALSE(r.diagnostics.empty());
    }
}

// Random valid trees survive serialize -> parse unchanged.
TEST(Gate, SerializeRoundTripProperty)
{
    std::mt19937_64 rng(3);
    const auto& wl = default_whitelist();
    auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
    std::function<BtNode(int)> gen = [&](int depth) -> BtNode {
        if (depth == 0 || pick(3) == 0)
        {
            const bool act = pick(2) == 0;
            const auto& specs = act ? wl.actions() : wl.conditions();
            const auto& spec = specs[pick(specs.size())];
            if (!act)
                return condition(spec.name);
            Params p;
            if (spec.name == "ChangeColor")
                p["color"] = allowed_colors()[pick(allowed_colors().size())];
            return action(spec.name, p);
        }
        std::vector<BtNode> kids;
        const std::size_t n = 1 + pick(3);
        for (std::size_t i = 0; i < n; ++i)
            kids.push_back(gen(depth - 1));
        return pick(2) == 0 ? sequence(std::move(kids)) : fallback(std::move(kids));
    };
    for (int i = 0; i < 300; ++i)
    {
        const BehaviorTree tree = make_tree(gen(4), i % 2 == 0 ? "MainTree" : "T" + std::to_string(i));
        const std::string text = serialize_tree(tree);
        const auto r = parse_document(text);
        ASSERT_TRUE(r.accepted()) << text;
        EXPECT_EQ(*r.tree, tree);
        EXPECT_EQ(serialize_tree(*r.tree), text);
    }
}

TEST(Gate, SerializeRefusesInvalidTrees)
{
    EXPECT_THROW(serialize_tree(make_tree(action("LaunchRocket"))), SerializeError);
    EXPECT_THROW(serialize_tree(make_tree(sequence({}))), SerializeError);
    EXPECT_THROW(serialize_tree(make_tree(action("ChangeColor", {{"color", "pink"}}))), SerializeError);
    BehaviorTree undeclared = make_tree(action("Wander"));
    undeclared.declared_model.clear();
    EXPECT_THROW(serialize_tree(undeclared), SerializeError);
}

TEST(Gate, ReportJson)
{
    const auto j = to_json(parse_document("<root><BehaviorTree>"));
    EXPECT_EQ(j.at("verdict"), "Rejected");
    EXPECT_EQ(j.at("category"), "MalformedXml");
    EXPECT_FALSE(j.at("diagnostics").empty());
}

TEST(Gate, CorpusRunsUnderOneSecond)
{
    const auto start = std::chrono::steady_clock::now();
    for (int i = 1; i <= sim::kScenarioCount; ++i)
        for (int k = 0; k < 100; ++k)
            (void)parse_document(serialize_tree(sim::load_scenario(i).reference_tree));
    EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(1));
}

#include <gtest/gtest.h>

#include "swarmcmd/xml.hpp"

using namespace swarmcmd;

TEST(Xml, ParsesElementsAttributesAndNesting)
{
    const auto r = xml::parse(R"(<a x="1" y='two'><b/><c>text</c></a>)");
    ASSERT_TRUE(r.ok()) << r.error->message;
    EXPECT_EQ(r.root->name, "a");
    ASSERT_EQ(r.root->attributes.size(), 2u);
    EXPECT_EQ(r.root->find_attribute("y")->value, "two");
    ASSERT_EQ(r.root->children.size(), 2u);
    EXPECT_EQ(r.root->children[1].name, "c");
    EXPECT_TRUE(r.root->children[1].text.has_value());
    EXPECT_FALSE(r.root->children[0].text.has_value());
}

TEST(Xml, DecodesEntitiesInAttributes)
{
    const auto r = xml::parse(R"(<a v="&lt;&amp;&gt;&quot;&apos;&#65;&#x42;"/>)");
    ASSERT_TRUE(r.ok());
    EXPECT_EQ(r.root->find_attribute("v")->value, "<&>\"'AB");
}

TEST(Xml, SkipsPrologCommentsAndProcessingInstructions)
{
    const auto r = xml::parse("<?xml version=\"1.0\"?>\n<!-- hi -->\n<a><?pi x?><!--c--></a>\n<!-- tail -->");
    ASSERT_TRUE(r.ok()) << r.error->message;
    EXPECT_TRUE(r.root->children.empty());
}

TEST(Xml, CdataCountsAsText)
{
    const auto r = xml::parse("<a><![CDATA[<not a tag>]]></a>");
    ASSERT_TRUE(r.ok());
    EXPECT_TRUE(r.root->text.has_value());
}

TEST(Xml, RejectsMalformedInput)
{
    for (const char* bad : {
             "<a>",                      // unclosed
             "<a></b>",                  // mismatch
             "<a x=1/>",                 // unquoted
             "<a x=\"1\" x=\"2\"/>",     // duplicate attribute
             "<a/><b/>",                 // two roots
             "<a>&bogus;</a>",           // unknown entity
             "<a>&#0;</a>",              // illegal char ref
             "<a v=\"<\"/>",             // raw < in attribute
             "<a>x & y</a>",             // bare ampersand
             "<!DOCTYPE a><a/>",         // doctype refused
             "<a><!-- -- --></a>",       // double hyphen in comment
             "<1a/>",                    // bad name
             "",                         // empty
             "<a>\xff</a>",              // invalid UTF-8
         })
    {
        const auto r = xml::parse(bad);
        EXPECT_FALSE(r.ok()) << "accepted: " << bad;
        if (!r.ok())
        {
            EXPECT_GE(r.error->loc.line, 1);
            EXPECT_GE(r.error->loc.column, 1);
        }
    }
}

TEST(Xml, ReportsLineAndColumn)
{
    const auto r = xml::parse("<a>\n  <b>\n</a>");
    ASSERT_FALSE(r.ok());
    EXPECT_EQ(r.error->loc.line, 3);
}

TEST(Xml, DepthLimit)
{
    std::string deep;
    for (int i = 0; i < 300; ++i)
        deep += "<a>";
    for (int i = 0; i < 300; ++i)
        deep += "</a>";
    EXPECT_FALSE(xml::parse(deep).ok());
    EXPECT_TRUE(xml::parse(deep, 400).ok());
}

TEST(Xml, NameRules)
{
    EXPECT_TRUE(xml::is_valid_name("ChangeColor"));
    EXPECT_TRUE(xml::is_valid_name("_x.y-z"));
    EXPECT_FALSE(xml::is_valid_name("9lives"));
    EXPECT_FALSE(xml::is_valid_name(""));
    EXPECT_FALSE(xml::is_valid_name("a b"));
}

TEST(Xml, EscapeAttributeRoundTrips)
{
    const std::string raw = "a<b>&\"c'";
    const auto r = xml::parse("<x v=\"" + xml::escape_attribute(raw) + "\"/>");
    ASSERT_TRUE(r.ok());
    EXPECT_EQ(r.root->find_attribute("v")->value, raw);
}

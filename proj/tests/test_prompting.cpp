#include <doctest.h>

#include <map>
#include <set>

#include "helpers.hpp"
#include "ldt/prompting.hpp"
#include "ldt/util.hpp"

using namespace ldt;

namespace {

std::string tmpl(const std::vector<Pattern>& catalog, PatternFamily family, int id) {
  for (const auto& p : catalog)
    if (p.family == family && p.id == id) return p.template_text;
  FAIL("pattern not found");
  return {};
}

}  // namespace

TEST_SUITE("prompting") {

TEST_CASE("topic catalog is a byte-exact transcription (article noun)") {
  auto cat = pattern_catalog(TaskKind::Topic, TopicNoun::Article);
  REQUIRE(cat.size() == 14);
  int qa = 0, prompt = 0;
  for (const auto& p : cat) (p.family == PatternFamily::QA ? qa : prompt)++;
  CHECK(qa == 4);
  CHECK(prompt == 10);

  CHECK(tmpl(cat, PatternFamily::QA, 1) ==
        "{x} Question: What is the topic of this article? Answer: {mask}.");
  CHECK(tmpl(cat, PatternFamily::QA, 2) ==
        "{x} Question: What is the category of this article? Answer: {mask}.");
  CHECK(tmpl(cat, PatternFamily::QA, 3) ==
        "{x} Question: What is the topic of this article? Answer: {mask}");
  CHECK(tmpl(cat, PatternFamily::QA, 4) ==
        "{x} Question: What is the category of this article? Answer: {mask}");
  CHECK(tmpl(cat, PatternFamily::Prompt, 1) == "{x} Category: {mask}.");
  CHECK(tmpl(cat, PatternFamily::Prompt, 2) == "{x} Class: {mask}.");
  CHECK(tmpl(cat, PatternFamily::Prompt, 3) == "{x} Topic: {mask}.");
  CHECK(tmpl(cat, PatternFamily::Prompt, 4) == "{x} Theme: {mask}.");
  CHECK(tmpl(cat, PatternFamily::Prompt, 5) == "{x} Category: {mask}");
  CHECK(tmpl(cat, PatternFamily::Prompt, 6) == "{x} Class: {mask}");
  CHECK(tmpl(cat, PatternFamily::Prompt, 7) == "{x} Topic: {mask}");
  CHECK(tmpl(cat, PatternFamily::Prompt, 8) == "{x} Theme: {mask}");
  CHECK(tmpl(cat, PatternFamily::Prompt, 9) == "{mask} News: {x}");
  CHECK(tmpl(cat, PatternFamily::Prompt, 10) == "{mask} NEWS: {x}");
}

TEST_CASE("sentiment catalog is a byte-exact transcription") {
  auto cat = pattern_catalog(TaskKind::Sentiment);
  REQUIRE(cat.size() == 14);
  CHECK(tmpl(cat, PatternFamily::QA, 1) ==
        "{x} Question: What is the sentiment of this text? Answer: {mask}.");
  CHECK(tmpl(cat, PatternFamily::QA, 2) ==
        "{x} Question: What is the writer's opinion in this text? Answer: {mask}.");
  CHECK(tmpl(cat, PatternFamily::QA, 3) ==
        "{x} Question: What is the sentiment of this text? Answer: {mask}");
  CHECK(tmpl(cat, PatternFamily::QA, 4) ==
        "{x} Question: What is the writer's opinion in this text? Answer: {mask}");
  CHECK(tmpl(cat, PatternFamily::Prompt, 1) == "{x} Opinion: {mask}.");
  CHECK(tmpl(cat, PatternFamily::Prompt, 2) == "{x} Feeling: {mask}.");
  CHECK(tmpl(cat, PatternFamily::Prompt, 3) == "{x} Sentiment: {mask}.");
  CHECK(tmpl(cat, PatternFamily::Prompt, 4) == "{x} Summary: {mask}.");
  CHECK(tmpl(cat, PatternFamily::Prompt, 5) == "{x} Opinion: {mask}");
  CHECK(tmpl(cat, PatternFamily::Prompt, 6) == "{x} Feeling: {mask}");
  CHECK(tmpl(cat, PatternFamily::Prompt, 7) == "{x} Sentiment: {mask}");
  CHECK(tmpl(cat, PatternFamily::Prompt, 8) == "{x} Summary: {mask}");
  CHECK(tmpl(cat, PatternFamily::Prompt, 9) == "{mask} Sentiment: {x}");
  CHECK(tmpl(cat, PatternFamily::Prompt, 10) == "{mask} SENTIMENT: {x}");
}

TEST_CASE("topic noun substitution covers question and newsgroup variants") {
  auto yahoo = pattern_catalog(TaskKind::Topic, TopicNoun::Question);
  CHECK(tmpl(yahoo, PatternFamily::QA, 1) ==
        "{x} Question: What is the topic of this question? Answer: {mask}.");
  CHECK(tmpl(yahoo, PatternFamily::Prompt, 9) == "{mask} Question: {x}");
  CHECK(tmpl(yahoo, PatternFamily::Prompt, 10) == "{mask} QUESTION: {x}");

  auto ng = pattern_catalog(TaskKind::Topic, TopicNoun::Newsgroup);
  CHECK(tmpl(ng, PatternFamily::QA, 1) ==
        "{x} Question: What is the topic of this newsgroup? Answer: {mask}.");
  CHECK(tmpl(ng, PatternFamily::Prompt, 9) == "{mask} Newsgroup: {x}");
  CHECK(tmpl(ng, PatternFamily::Prompt, 10) == "{mask} NEWSGROUP: {x}");
}

TEST_CASE("pattern keys are unique and catalogs map to datasets") {
  for (DatasetId id : all_datasets()) {
    auto cat = pattern_catalog_for(id);
    CHECK(cat.size() == 14);
    std::set<std::string> keys;
    for (const auto& p : cat) keys.insert(p.key());
    CHECK(keys.size() == 14);
  }
  CHECK(task_kind_for(DatasetId::Yelp5) == TaskKind::Sentiment);
  CHECK(task_kind_for(DatasetId::DbPedia) == TaskKind::Topic);
  CHECK(topic_noun_for(DatasetId::Yahoo) == TopicNoun::Question);
  CHECK(topic_noun_for(DatasetId::Ng20x4) == TopicNoun::Newsgroup);
  CHECK(find_pattern(pattern_catalog_for(DatasetId::AgNews), "prompt9").has_value());
  CHECK_FALSE(find_pattern(pattern_catalog_for(DatasetId::AgNews), "prompt11").has_value());
}

TEST_CASE("render splices text into the frame verbatim") {
  auto cat = pattern_catalog(TaskKind::Topic, TopicNoun::Article);
  Pattern prompt3 = *find_pattern(cat, "prompt3");
  PromptString p = render(prompt3, "Overpriced, salty and overrated!");
  CHECK(p.to_string() == "Overpriced, salty and overrated! Topic: {mask}.");
  CHECK_FALSE(p.mask_before_text());

  Pattern prompt9 = *find_pattern(cat, "prompt9");
  PromptString q = render(prompt9, "x");
  CHECK(q.to_string() == "{mask} News: x");
  CHECK(q.mask_before_text());
}

TEST_CASE("render recovers the original text from the text segment") {
  auto cat = pattern_catalog(TaskKind::Sentiment);
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    std::string text;
    int len = 1 + static_cast<int>(rng() % 40);
    for (int i = 0; i < len; ++i) text += static_cast<char>(' ' + rng() % 94);
    const Pattern& pattern = cat[rng() % cat.size()];
    PromptString p = render(pattern, text);
    CHECK(p.text() == text);
  }
}

TEST_CASE("verbalizer tables transcribe the published selections") {
  auto ag = verbalizers_for(DatasetId::AgNews);
  REQUIRE(ag.size() == 4);
  CHECK(ag.entries[0].label == "World");
  CHECK(ag.entries[0].word == "World");
  CHECK(ag.entries[3].label == "Sci/Tech");
  CHECK(ag.entries[3].word == "Tech");

  auto yelp5 = verbalizers_for(DatasetId::Yelp5);
  CHECK(yelp5.entries[0].word == "terrible");
  CHECK(yelp5.entries[1].word == "bad");
  CHECK(yelp5.entries[2].word == "okay");
  CHECK(yelp5.entries[3].word == "good");
  CHECK(yelp5.entries[4].word == "great");

  auto ng = verbalizers_for(DatasetId::Ng20x4);
  CHECK(ng.entries[0].word == "religion");
  CHECK(ng.entries[1].word == "automobile");
  CHECK(ng.entries[2].word == "medicine");
  CHECK(ng.entries[3].word == "gun");

  auto binary = verbalizers_for(DatasetId::Imdb);
  CHECK(binary.entries[0].word == "awful");
  CHECK(binary.entries[1].word == "great");
  CHECK(verbalizers_for(DatasetId::Yelp2).entries == binary.entries);

  auto dbp = verbalizers_for(DatasetId::DbPedia);
  REQUIRE(dbp.size() == 14);
  CHECK(dbp.entries[1].word == "school");
  CHECK(dbp.entries[13].word == "book");

  // Every table is bijective.
  for (DatasetId id : all_datasets()) {
    auto vmap = verbalizers_for(id);
    std::set<std::string> words;
    for (const auto& e : vmap.entries) words.insert(e.word);
    CHECK(words.size() == vmap.size());
    CHECK(vmap.size() == dataset_spec(id).label_names.size());
  }
}

TEST_CASE("single-token validation fills distinct ids in mask context") {
  ByteLevelBpe tok = ldt::test::make_test_tokenizer();
  auto vmap = validate_single_token(verbalizers_for(DatasetId::AgNews), tok);
  REQUIRE(vmap.validated());
  std::set<int> ids(vmap.token_ids.begin(), vmap.token_ids.end());
  CHECK(ids.size() == 4);
  // Oracle: encoding " <word>" directly must give exactly that one id.
  for (size_t i = 0; i < vmap.entries.size(); ++i) {
    auto direct = tok.encode(" " + vmap.entries[i].word);
    REQUIRE(direct.size() == 1);
    CHECK(direct[0] == vmap.token_ids[i]);
  }
}

TEST_CASE("validation is idempotent") {
  ByteLevelBpe tok = ldt::test::make_test_tokenizer();
  auto once = validate_single_token(verbalizers_for(DatasetId::Yelp5), tok);
  auto twice = validate_single_token(once, tok);
  CHECK(once.token_ids == twice.token_ids);
  CHECK(once.entries.size() == twice.entries.size());
}

TEST_CASE("validation rejects empty, duplicate and multi-token maps") {
  ByteLevelBpe tok = ldt::test::make_test_tokenizer();
  VerbalizerMap empty;
  CHECK_THROWS_AS(validate_single_token(empty, tok), Error);

  VerbalizerMap dup;
  dup.entries = {{"A", "good"}, {"B", "good"}};
  CHECK_THROWS_WITH_AS(validate_single_token(dup, tok), doctest::Contains("good"), Error);

  VerbalizerMap multi;
  multi.entries = {{"A", "good"}, {"B", "unmergedword"}};
  CHECK_THROWS_WITH_AS(validate_single_token(multi, tok),
                       doctest::Contains("unmergedword"), Error);
}

TEST_CASE("icl prompt contains every example once, shuffled by seed") {
  LabelDescSet set =
      build_from_task(load_task_file(std::filesystem::path(LDT_SOURCE_DIR) / "data" /
                                     "tasks" / "sentiment2.task"));
  REQUIRE(set.examples.size() == 100);
  std::string p0 = build_icl_prompt(set, "the query text", 0, "Classify the sentiment.");
  std::string p0_again = build_icl_prompt(set, "the query text", 0, "Classify the sentiment.");
  CHECK(p0 == p0_again);

  // Exactly 100 demonstration lines plus the query line.
  size_t arrows = 0, at = 0;
  while ((at = p0.find(" →", at)) != std::string::npos) {
    ++arrows;
    at += 1;
  }
  CHECK(arrows == 101);
  CHECK(p0.substr(p0.size() - std::string("the query text →").size()) ==
        "the query text →");

  std::string p1 = build_icl_prompt(set, "the query text", 1, "Classify the sentiment.");
  CHECK(p0 != p1);  // different order
  auto lines0 = split(p0, '\n');
  auto lines1 = split(p1, '\n');
  std::multiset<std::string> m0(lines0.begin(), lines0.end());
  std::multiset<std::string> m1(lines1.begin(), lines1.end());
  CHECK(m0 == m1);  // same demonstration multiset
}

TEST_CASE("catalog export lists one pattern per line") {
  auto cat = pattern_catalog_for(DatasetId::Sst5);
  std::string text = catalog_to_text(cat);
  CHECK(split(text, '\n').size() == 15);  // 14 + trailing empty
  CHECK(text.find("prompt\t9\t{mask} Sentiment: {x}") != std::string::npos);
}

}  // TEST_SUITE

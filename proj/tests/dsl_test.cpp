#include <gtest/gtest.h>

#include <regex>
#include <set>

#include "figure_examples.hpp"
#include "lp/dsl_text.hpp"
#include "lp/interpreter.hpp"
#include "lp/rng.hpp"
#include "lp/taskgen.hpp"

namespace lp::dsl {
namespace {

Program fig1_program() {
  return Program{{Nesting{GetToken{TypeToken::PropCase, 2}}, ConstStr{' '}, Nesting{GetToken{TypeToken::AllCaps, 1}}}};
}

// Independent oracle: std::regex leftmost-longest iteration.
std::vector<Span> regex_oracle(const std::string& s, const Regex& r) {
  std::string pattern;
  if (r.is_delimiter()) {
    pattern = std::string("\\") + r.delimiter_char();
    if (r.delimiter_char() == ' ') pattern = " ";
  } else {
    switch (r.type()) {
      case TypeToken::Number: pattern = "[0-9]+"; break;
      case TypeToken::Word: pattern = "[A-Za-z]+"; break;
      case TypeToken::Alphanum: pattern = "[A-Za-z0-9]+"; break;
      case TypeToken::AllCaps: pattern = "[A-Z]+"; break;
      case TypeToken::PropCase: pattern = "[A-Z][a-z]*"; break;
      case TypeToken::Lower: pattern = "[a-z]+"; break;
      case TypeToken::Digit: pattern = "[0-9]"; break;
      case TypeToken::Char: pattern = "[^ ]"; break;
    }
  }
  std::vector<Span> out;
  const std::regex re(pattern);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
    const auto start = static_cast<std::size_t>(it->position());
    out.push_back({start, start + static_cast<std::size_t>(it->length())});
  }
  return out;
}

TEST(Render, FigureOneProgram) {
  EXPECT_EQ(render_program(fig1_program()), "GetToken_PROP_CASE_2 | Const( ) | GetToken_ALL_CAPS_1");
}

TEST(Render, SingleConst) { EXPECT_EQ(render_program(Program{{ConstStr{'.'}}}), "Const(.)"); }

TEST(Render, ComposeAndBoundaries) {
  Program p{{Compose{Replace{' ', '.'}, SubStr{-8, -1}},
             GetSpan{Regex::delimiter('('), 1, Boundary::End, Regex::of(TypeToken::Number), -2, Boundary::Start}}};
  const std::string text = render_program(p);
  EXPECT_EQ(text, "Replace_ _.(SubStr_-8_-1) | GetSpan_(_1_END_NUMBER_-2_START");
  EXPECT_EQ(parse_program(text), p);
}

TEST(Parse, ToyGetSpanDefaultsBoundaries) {
  const Program p = parse_program("GetSpan_ALPHANUM_1_ALPHANUM_1", {Dialect::Toy});
  const Program want{{GetSpan{Regex::of(TypeToken::Alphanum), 1, Boundary::Start, Regex::of(TypeToken::Alphanum), 1,
                              Boundary::End}}};
  EXPECT_EQ(p, want);
}

TEST(Parse, ConstDot) { EXPECT_EQ(parse_program("Const(.)"), (Program{{ConstStr{'.'}}})); }

TEST(Parse, UnknownTypeToken) { EXPECT_THROW(parse_program("GetToken_BOGUS_1"), ParseError); }

TEST(Parse, MalformedTextReportsPosition) {
  try {
    parse_program("Const(a) | SubStr_1_0");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position, 20u);
  }
  EXPECT_THROW(parse_program(""), ParseError);
  EXPECT_THROW(parse_program("Const(a) | "), ParseError);
  EXPECT_THROW(parse_program("GetToken_WORD_6"), ParseError);
  EXPECT_THROW(parse_program("Trim(Const(a))"), ParseError);
  EXPECT_THROW(parse_program("GetSpan_WORD_1_START_WORD_1"), ParseError);
}

TEST(Parse, ToyRejectsFullConstructs) {
  EXPECT_THROW(parse_program("GetToken_WORD_1", {Dialect::Toy}), DialectError);
  EXPECT_THROW(parse_program("GetSpan_LOWER_1_WORD_1", {Dialect::Toy}), DialectError);
  EXPECT_THROW(parse_program("GetSpan_WORD_3_WORD_1", {Dialect::Toy}), DialectError);
  EXPECT_THROW(parse_program("GetSpan_WORD_1_END_WORD_1_END", {Dialect::Toy}), DialectError);
  EXPECT_NO_THROW(parse_program("GetSpan_WORD_1_START_WORD_1_END", {Dialect::Toy}));
}

TEST(Parse, RoundTripRandomPrograms) {
  Rng rng(1234);
  for (auto dialect : {Dialect::Full, Dialect::Toy}) {
    GenConfig cfg = GenConfig::for_dialect(dialect);
    for (int n = 0; n < 10000; ++n) {
      const Program p = sample_program(rng, cfg);
      const std::string text = render_program(p);
      ASSERT_EQ(parse_program(text, {dialect}), p) << text;
      ASSERT_EQ(render_program(parse_program(text)), text);
    }
  }
}

TEST(MatchSpans, AllCapsInName) {
  EXPECT_EQ(match_spans("Mason Smith", Regex::of(TypeToken::AllCaps)), (std::vector<Span>{{0, 1}, {6, 7}}));
}

TEST(MatchSpans, EmptyInput) { EXPECT_TRUE(match_spans("", Regex::of(TypeToken::Number)).empty()); }

TEST(MatchSpans, PhoneNumbers) {
  EXPECT_EQ(match_spans("(321) 704 3331", Regex::of(TypeToken::Number)),
            (std::vector<Span>{{1, 4}, {6, 9}, {10, 14}}));
}

TEST(MatchSpans, AgreesWithRegexOracle) {
  Rng rng(99);
  const std::string alphabet = "aZbY09 .,(&Xx7";
  std::vector<Regex> regexes;
  for (auto t : kTypeTokens) regexes.push_back(Regex::of(t));
  for (char c : std::string_view(" .,(&")) regexes.push_back(Regex::delimiter(c));
  for (int n = 0; n < 2000; ++n) {
    std::string s;
    const int len = uniform_int(rng, 0, 30);
    for (int i = 0; i < len; ++i) s += alphabet[uniform_index(rng, alphabet.size())];
    for (const auto& r : regexes) ASSERT_EQ(match_spans(s, r), regex_oracle(s, r)) << s;
  }
}

TEST(MatchSpans, NegativeIndexDuality) {
  Rng rng(5);
  GenConfig cfg;
  for (int n = 0; n < 500; ++n) {
    const std::string s = sample_input(rng, sample_program(rng, cfg), cfg);
    for (auto t : kTypeTokens) {
      const Regex r = Regex::of(t);
      const int m = static_cast<int>(match_spans(s, r).size());
      for (int j = 1; j <= m; ++j) ASSERT_EQ(occurrence(s, r, -j), occurrence(s, r, m - j + 1));
    }
  }
}

TEST(Execute, FigureOne) { EXPECT_EQ(execute(fig1_program(), "Mason Smith"), "Smith M"); }

TEST(Execute, PhoneNumber) {
  Program p{{Nesting{GetToken{TypeToken::Number, 1}}, ConstStr{'.'}, Compose{Replace{' ', '.'}, SubStr{-8, -1}}}};
  EXPECT_EQ(execute(p, "(321) 704 3331"), "321.704.3331");
}

TEST(Execute, ToyFirstAlphanum) {
  EXPECT_EQ(execute(parse_program("GetSpan_ALPHANUM_1_ALPHANUM_1", {Dialect::Toy}), ",C,XoC"), "C");
}

TEST(Execute, SubStrClampsAndRejectsEmpty) {
  EXPECT_EQ(execute(parse_program("SubStr_2_100"), "abcd"), "bcd");
  EXPECT_EQ(execute(parse_program("SubStr_-100_2"), "abcd"), "ab");
  EXPECT_EQ(execute(parse_program("SubStr_-1_-1"), "abcd"), "d");
  EXPECT_THROW(execute(parse_program("SubStr_3_2"), "abcd"), ExecError);
  EXPECT_THROW(execute(parse_program("SubStr_1_1"), ""), ExecError);
}

TEST(Execute, NestingOps) {
  EXPECT_EQ(execute(parse_program("ToCase_PROPER"), "hELLO wORLD 9x"), "Hello World 9X");
  EXPECT_EQ(execute(parse_program("ToCase_ALL_CAPS"), "ab1c"), "AB1C");
  EXPECT_EQ(execute(parse_program("Trim"), "  a b  "), "a b");
  EXPECT_EQ(execute(parse_program("GetUpto_,"), "ab,cd,e"), "ab,");
  EXPECT_EQ(execute(parse_program("GetFrom_,"), "ab,cd,e"), "cd,e");
  EXPECT_EQ(execute(parse_program("GetFirst_NUMBER_2"), "a1b22c333"), "122");
  EXPECT_EQ(execute(parse_program("GetFirst_NUMBER_-2"), "a1b22c333"), "22333");
  EXPECT_EQ(execute(parse_program("GetAll_ALL_CAPS"), "Milk 4, Yoghurt 12"), "M Y");
  EXPECT_EQ(execute(parse_program("GetToken_WORD_-1"), "one two three"), "three");
  EXPECT_THROW(execute(parse_program("GetToken_WORD_4"), "one two three"), ExecError);
}

TEST(Execute, ErrorNamesExpression) {
  try {
    execute(parse_program("Const(a) | GetToken_NUMBER_1"), "no digits");
    FAIL() << "expected ExecError";
  } catch (const ExecError& e) {
    EXPECT_EQ(e.expr_index, 1u);
  }
}

TEST(Execute, Deterministic) {
  Rng rng(17);
  GenConfig cfg;
  for (int n = 0; n < 200; ++n) {
    const Program p = sample_program(rng, cfg);
    const std::string s = sample_input(rng, p, cfg);
    EXPECT_EQ(try_execute(p, s), try_execute(p, s));
  }
}

TEST(Execute, ToyProgramsBehaveIdenticallyUnderFullDialect) {
  Rng rng(3);
  GenConfig cfg = GenConfig::for_dialect(Dialect::Toy);
  for (int n = 0; n < 2000; ++n) {
    const Program p = sample_program(rng, cfg);
    const std::string text = render_program(p);
    const Program full = parse_program(text, {Dialect::Full});
    ASSERT_TRUE(is_toy_program(full));
    const std::string s = sample_input(rng, p, cfg);
    ASSERT_EQ(try_execute(p, s), try_execute(full, s));
  }
}

TEST(Execute, FullFigureExamples) {
  for (const auto& ex : testing::full_figure_examples()) {
    const Program p = parse_program(ex.program);
    for (std::size_t i = 0; i < ex.inputs.size(); ++i) {
      const bool wrong = std::find(ex.known_wrong_rows.begin(), ex.known_wrong_rows.end(), i) !=
                         ex.known_wrong_rows.end();
      const auto got = try_execute(p, ex.inputs[i]);
      if (wrong) {
        EXPECT_NE(got, std::optional<std::string>(ex.outputs[i])) << ex.label << " row " << i;
      } else {
        EXPECT_EQ(got, std::optional<std::string>(ex.outputs[i])) << ex.label << " row " << i;
      }
    }
  }
}

TEST(IsConsistent, Cases) {
  Task fig1{{"Mason Smith", "Henry Myers", "Barry Underwood", "Sandy Jones"},
            {"Smith M", "Myers H", "Underwood B", "Jones S"},
            std::nullopt};
  EXPECT_TRUE(is_consistent(fig1_program(), fig1));
  EXPECT_FALSE(is_consistent(Program{{ConstStr{'x'}}}, fig1));
  EXPECT_FALSE(is_consistent(parse_program("GetToken_NUMBER_1"), fig1));
}

}  // namespace
}  // namespace lp::dsl

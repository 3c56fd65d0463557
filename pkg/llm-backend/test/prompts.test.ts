import { describe, expect, it } from "vitest";
import { ACT_PREAMBLE, buildActPrompt, buildSurveyPrompt, personaName } from "../src/prompts.js";

const META_MALE = '{"AGE": "45-54", "SEX": "Male", "RACE": "White", "STATE": "NJ"}';
const META_FEMALE = '{"AGE": "18-24", "SEX": "Female", "RACE": "Asian", "STATE": "CA"}';
const FREE_TEXT = "You are a regular user of a social platform, part of persona group 00.";

describe("persona names", () => {
  it("is stable for a given agent id", () => {
    expect(personaName("a0001", META_MALE)).toBe(personaName("a0001", META_MALE));
  });

  it("keys the table on the SEX field", () => {
    const maleNames = new Set(
      Array.from({ length: 200 }, (_, i) => personaName(`a${i}`, META_MALE)),
    );
    const femaleNames = new Set(
      Array.from({ length: 200 }, (_, i) => personaName(`a${i}`, META_FEMALE)),
    );
    for (const name of maleNames) expect(femaleNames.has(name)).toBe(false);
  });

  it("falls back to a neutral table when no SEX field exists", () => {
    const name = personaName("a0042", FREE_TEXT);
    expect(typeof name).toBe("string");
    expect(name.length).toBeGreaterThan(0);
  });

  it("spreads agents across several names", () => {
    const names = new Set(Array.from({ length: 200 }, (_, i) => personaName(`a${i}`, META_MALE)));
    expect(names.size).toBeGreaterThan(4);
  });
});

describe("act prompt", () => {
  it("starts with the platform preamble and embeds the persona verbatim", () => {
    const prompt = buildActPrompt("a0000", FREE_TEXT, []);
    expect(prompt.startsWith(ACT_PREAMBLE + FREE_TEXT)).toBe(true);
  });

  it("renders thread context as author: text lines", () => {
    const prompt = buildActPrompt("a0000", FREE_TEXT, [
      { author: "u1", text: "first post" },
      { author: "u2", text: "a reply" },
    ]);
    expect(prompt).toContain("u1: first post\nu2: a reply");
    expect(prompt).toContain("Your reply:");
  });

  it("asks for a new post when context is empty", () => {
    const prompt = buildActPrompt("a0000", FREE_TEXT, []);
    expect(prompt).toContain("Your new post:");
    expect(prompt).not.toContain("Thread so far");
  });
});

describe("survey prompt", () => {
  it("ends with an answer cue so option scoring continues naturally", () => {
    const prompt = buildSurveyPrompt("a0000", META_MALE, [], "Favor or oppose?");
    expect(prompt.endsWith("Answer:")).toBe(true);
    expect(prompt).toContain("Survey question: Favor or oppose?");
  });

  it("includes observed posts when present", () => {
    const prompt = buildSurveyPrompt(
      "a0000",
      META_MALE,
      [{ author: "peer", text: "saw the news today" }],
      "Favor or oppose?",
    );
    expect(prompt).toContain("peer: saw the news today");
  });
});

/**
 * Prompt assembly for the two request kinds.
 *
 * Personas arrive either as free text or as a meta-persona JSON string
 * (AGE / SEX / RACE / STATE fields). For the meta form we give the agent a
 * stable display name drawn from a table keyed on the SEX field, picked by
 * a hash of the agent id so the same agent always signs the same way.
 */

import { fnv1a } from "./model.js";

export const ACT_PREAMBLE =
  "You are a user on a social media platform. Write a new post, or a comment " +
  "in response to a thread. Only write in character. Speak in english, and " +
  "answer in a style consistent with the following persona: ";

const MALE_NAMES = [
  "James", "Robert", "Michael", "David", "Carlos", "Ahmed", "Dmitri", "Kenji",
  "Luis", "Marcus", "Pavel", "Samuel", "Tomas", "Victor", "Walter", "Yusuf",
];

const FEMALE_NAMES = [
  "Maria", "Jennifer", "Linda", "Patricia", "Aisha", "Chen", "Elena", "Fatima",
  "Grace", "Hannah", "Ingrid", "Keiko", "Lucia", "Nadia", "Priya", "Rosa",
];

const NEUTRAL_NAMES = [
  "Alex", "Casey", "Devon", "Emery", "Harper", "Jordan", "Kai", "Lane",
  "Morgan", "Quinn", "Reese", "Riley", "Rowan", "Sage", "Skyler", "Taylor",
];

function sexField(persona: string): string | undefined {
  const match = /"SEX"\s*:\s*"([^"]+)"/i.exec(persona);
  return match?.[1];
}

export function personaName(agentId: string, persona: string): string {
  const sex = sexField(persona)?.toLowerCase();
  const table =
    sex === "male" ? MALE_NAMES : sex === "female" ? FEMALE_NAMES : NEUTRAL_NAMES;
  return table[fnv1a(agentId) % table.length];
}

export interface ContextPost {
  author: string;
  text: string;
}

function renderContext(context: readonly ContextPost[]): string {
  return context.map((post) => `${post.author}: ${post.text}`).join("\n");
}

export function buildActPrompt(
  agentId: string,
  persona: string,
  context: readonly ContextPost[],
): string {
  const lines = [ACT_PREAMBLE + persona];
  lines.push(`Your display name is ${personaName(agentId, persona)}.`);
  if (context.length > 0) {
    lines.push("", "Thread so far:", renderContext(context), "", "Your reply:");
  } else {
    lines.push("", "Your new post:");
  }
  return lines.join("\n");
}

export function buildSurveyPrompt(
  agentId: string,
  persona: string,
  context: readonly ContextPost[],
  question: string,
): string {
  const lines = [ACT_PREAMBLE + persona];
  lines.push(`Your display name is ${personaName(agentId, persona)}.`);
  if (context.length > 0) {
    lines.push("", "Recent posts you have seen:", renderContext(context));
  }
  lines.push("", `Survey question: ${question}`, "Answer:");
  return lines.join("\n");
}

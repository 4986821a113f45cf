// Pure view-model logic: job-list ordering, staged (unsaved) edits, and the
// click/keyboard grammar. Kept DOM-free so it is testable in isolation.

import type { JobDetail, JobSummary, PatchBody } from "./api";

const STATE_RANK: Record<string, number> = {
  needs_review: 0,
  recognized: 1,
  resolved: 2,
};

/** Jobs needing review first, then by flag count descending, then stable by id. */
export function sortJobs(jobs: JobSummary[]): JobSummary[] {
  return [...jobs].sort((a, b) => {
    const rank = (STATE_RANK[a.state] ?? 1) - (STATE_RANK[b.state] ?? 1);
    if (rank !== 0) return rank;
    if (a.flag_count !== b.flag_count) return b.flag_count - a.flag_count;
    return a.job_id < b.job_id ? -1 : a.job_id > b.job_id ? 1 : 0;
  });
}

/** The chosen square implied by an answer row, or null if not exactly one. */
export function rowToChosen(row: number[]): number | null {
  const ones = row.flatMap((v, i) => (v ? [i] : []));
  return ones.length === 1 ? ones[0]! : null;
}

export interface QuestionEdit {
  chosen: number | null;
  canceled: boolean;
}

export function buildPatchBody(edit: QuestionEdit): PatchBody {
  return { chosen: edit.chosen, canceled: edit.canceled };
}

/** Map a keypress to an edit action: "1".."5" choose, "0" clears. */
export function keyToChosen(key: string): number | null | undefined {
  if (key === "0") return null;
  if (key >= "1" && key <= "5") return key.charCodeAt(0) - "1".charCodeAt(0);
  return undefined;
}

function sameEdit(a: QuestionEdit, b: QuestionEdit): boolean {
  return a.chosen === b.chosen && a.canceled === b.canceled;
}

/**
 * Staged-edit state for one job. Edits live here until Save PATCHes them;
 * a resolved job is read-only and rejects edits.
 */
export class ReviewModel {
  private server = new Map<number, QuestionEdit>();
  private staged = new Map<number, QuestionEdit>();
  detail: JobDetail;

  constructor(detail: JobDetail) {
    this.detail = detail;
    this.loadServerState(detail);
  }

  private loadServerState(detail: JobDetail): void {
    this.server.clear();
    const answers = detail.final_answers ?? [];
    const questions = detail.report?.questions ?? [];
    for (const q of questions) {
      const row = answers[q.question_index] ?? [0, 0, 0, 0, 0];
      const latest = [...detail.corrections]
        .reverse()
        .find((c) => c.question_index === q.question_index);
      this.server.set(q.question_index, {
        chosen: rowToChosen(row),
        canceled: latest ? latest.canceled : q.canceled,
      });
    }
  }

  get readOnly(): boolean {
    return this.detail.state === "resolved";
  }

  edit(question: number): QuestionEdit {
    const current = this.staged.get(question) ?? this.server.get(question);
    if (!current) throw new Error(`unknown question ${question}`);
    return { ...current };
  }

  private stage(question: number, edit: QuestionEdit): void {
    if (this.readOnly) throw new Error("job is resolved and read-only");
    const base = this.server.get(question);
    if (!base) throw new Error(`unknown question ${question}`);
    if (sameEdit(edit, base)) {
      this.staged.delete(question);
    } else {
      this.staged.set(question, edit);
    }
  }

  setChosen(question: number, chosen: number | null): void {
    if (chosen !== null && (chosen < 0 || chosen > 4)) {
      throw new Error(`chosen out of range: ${chosen}`);
    }
    this.stage(question, { ...this.edit(question), chosen });
  }

  /** Click grammar: clicking the already-chosen square clears it. */
  toggleSquare(question: number, square: number): void {
    const current = this.edit(question);
    this.setChosen(question, current.chosen === square ? null : square);
  }

  toggleCancel(question: number): void {
    const current = this.edit(question);
    this.stage(question, { ...current, canceled: !current.canceled });
  }

  /** Returns true if the key was handled. */
  applyKey(question: number, key: string): boolean {
    const chosen = keyToChosen(key);
    if (chosen === undefined) return false;
    this.setChosen(question, chosen);
    return true;
  }

  isDirty(question: number): boolean {
    return this.staged.has(question);
  }

  dirtyQuestions(): number[] {
    return [...this.staged.keys()].sort((a, b) => a - b);
  }

  /** PATCH bodies for every staged edit, in question order. */
  pendingPatches(): { question: number; body: PatchBody }[] {
    return this.dirtyQuestions().map((q) => ({
      question: q,
      body: buildPatchBody(this.staged.get(q)!),
    }));
  }

  /** Adopt fresh server state (after save or refresh); staged edits clear. */
  acceptServer(detail: JobDetail): void {
    this.detail = detail;
    this.loadServerState(detail);
    this.staged.clear();
  }
}

// DOM shell: a job list and a per-job review view, wired to the API client
// and the ReviewModel. Routing is hash-based (#/job/<id>).

import { ApiClient, ApiError, JobDetail, JobSummary, Question } from "./api";
import { ReviewModel, sortJobs } from "./model";

const SQUARE_LABELS = ["1", "2", "3", "4", "5"];

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export class App {
  private focusedQuestion = 0;
  private model: ReviewModel | null = null;

  constructor(
    private readonly api: ApiClient,
    private readonly root: HTMLElement,
  ) {
    window.addEventListener("hashchange", () => void this.route());
    document.addEventListener("keydown", (ev) => this.onKey(ev));
  }

  async route(): Promise<void> {
    const match = /^#\/job\/(.+)$/.exec(location.hash);
    try {
      if (match) {
        await this.showJob(match[1]!);
      } else {
        this.model = null;
        await this.showList();
      }
    } catch (err) {
      this.showError(err);
    }
  }

  private showError(err: unknown): void {
    const banner = el("div", "error-banner");
    banner.textContent =
      err instanceof ApiError ? `${err.message} (HTTP ${err.status})` : String(err);
    this.root.prepend(banner);
  }

  private async showList(): Promise<void> {
    const jobs = sortJobs(await this.api.listJobs());
    this.root.replaceChildren();
    this.root.append(el("h1", undefined, "Review queue"));
    if (jobs.length === 0) {
      this.root.append(el("p", "empty-state", "No jobs ingested yet."));
      return;
    }
    const table = el("table", "job-list");
    const head = el("tr");
    for (const label of ["Job", "Kind", "State", "Flags", ""]) {
      head.append(el("th", undefined, label));
    }
    table.append(head);
    for (const job of jobs) {
      table.append(this.jobRow(job));
    }
    this.root.append(table);
  }

  private jobRow(job: JobSummary): HTMLTableRowElement {
    const tr = el("tr", `job state-${job.state}`);
    tr.append(el("td", "job-id", job.job_id));
    tr.append(el("td", undefined, job.kind_id ?? "—"));
    tr.append(el("td", "state", job.error ? `error: ${job.error}` : job.state));
    tr.append(el("td", undefined, String(job.flag_count)));
    const open = el("td");
    const link = el("a", undefined, "open");
    link.href = `#/job/${job.job_id}`;
    open.append(link);
    tr.append(open);
    return tr;
  }

  private async showJob(jobId: string): Promise<void> {
    const detail = await this.api.getJob(jobId);
    this.model = new ReviewModel(detail);
    this.focusedQuestion = detail.report?.flagged_questions[0] ?? 0;
    this.renderJob();
  }

  private renderJob(): void {
    const model = this.model;
    if (!model) return;
    const detail = model.detail;
    this.root.replaceChildren();

    const header = el("div", "job-header");
    header.append(el("h1", undefined, `Job ${detail.job_id}`));
    const back = el("a", "back", "← all jobs");
    back.href = "#";
    header.append(back);
    header.append(el("span", `badge state-${detail.state}`, detail.state));
    this.root.append(header);

    if (detail.error) {
      this.root.append(el("p", "error-banner", `Sheet failed: ${detail.error}`));
    }
    if (!detail.report) return;

    const layout = el("div", "review-layout");
    layout.append(this.sheetPane(detail));
    layout.append(this.questionPane(detail));
    this.root.append(layout);
    this.root.append(this.actionBar(model));
  }

  private sheetPane(detail: JobDetail): HTMLElement {
    const pane = el("div", "sheet-pane");
    const img = el("img", "overlay");
    img.src = this.api.overlayUrl(detail.job_id);
    img.alt = `annotated sheet for job ${detail.job_id}`;
    pane.append(img);
    return pane;
  }

  private questionPane(detail: JobDetail): HTMLElement {
    const pane = el("div", "question-pane");
    for (const q of detail.report!.questions) {
      pane.append(this.questionRow(q));
    }
    return pane;
  }

  private questionRow(q: Question): HTMLElement {
    const model = this.model!;
    const edit = model.edit(q.question_index);
    const row = el("div", "question");
    if (q.flagged) row.classList.add("flagged");
    if (model.isDirty(q.question_index)) row.classList.add("dirty");
    if (q.question_index === this.focusedQuestion) row.classList.add("focused");
    row.tabIndex = 0;
    row.dataset.question = String(q.question_index);
    row.addEventListener("focus", () => {
      this.focusedQuestion = q.question_index;
      this.renderJob();
    });

    row.append(el("span", "qnum", `Q${q.question_index + 1}`));
    for (let i = 0; i < SQUARE_LABELS.length; i++) {
      const btn = el("button", "square", SQUARE_LABELS[i]);
      const state = q.marks[i];
      if (state) btn.classList.add(`mark-${state}`);
      if (edit.chosen === i) btn.classList.add("chosen");
      btn.disabled = model.readOnly;
      btn.addEventListener("click", () => {
        model.toggleSquare(q.question_index, i);
        this.focusedQuestion = q.question_index;
        this.renderJob();
      });
      row.append(btn);
    }

    const cancel = el("button", "cancel-toggle", edit.canceled ? "canceled" : "cancel");
    if (edit.canceled) cancel.classList.add("on");
    cancel.disabled = model.readOnly;
    cancel.addEventListener("click", () => {
      model.toggleCancel(q.question_index);
      this.renderJob();
    });
    row.append(cancel);

    if (q.flagged) {
      row.append(el("span", "flag-reason", q.flag_reason ?? "flagged"));
    }
    return row;
  }

  private actionBar(model: ReviewModel): HTMLElement {
    const bar = el("div", "action-bar");
    const save = el("button", "save", `Save (${model.dirtyQuestions().length})`);
    save.disabled = model.readOnly || model.dirtyQuestions().length === 0;
    save.addEventListener("click", () => void this.save());
    bar.append(save);

    const resolve = el("button", "resolve", "Resolve");
    resolve.disabled = model.readOnly;
    resolve.addEventListener("click", () => void this.resolve());
    bar.append(resolve);
    return bar;
  }

  private async save(): Promise<void> {
    const model = this.model;
    if (!model) return;
    try {
      let latest = model.detail;
      for (const { question, body } of model.pendingPatches()) {
        latest = await this.api.patchQuestion(model.detail.job_id, question, body);
      }
      model.acceptServer(latest);
      this.renderJob();
    } catch (err) {
      // staged edits survive a failed PATCH; the banner sits on top
      this.renderJob();
      this.showError(err);
    }
  }

  private async resolve(): Promise<void> {
    const model = this.model;
    if (!model) return;
    if (model.dirtyQuestions().length > 0
        && !window.confirm("Unsaved edits will be discarded. Resolve anyway?")) {
      return;
    }
    try {
      model.acceptServer(await this.api.resolve(model.detail.job_id));
      this.renderJob();
    } catch (err) {
      this.showError(err);
    }
  }

  private onKey(ev: KeyboardEvent): void {
    const model = this.model;
    if (!model || model.readOnly) return;
    if (ev.key === "ArrowDown" || ev.key === "ArrowUp") {
      const count = model.detail.report?.questions.length ?? 0;
      if (count === 0) return;
      const step = ev.key === "ArrowDown" ? 1 : -1;
      this.focusedQuestion = (this.focusedQuestion + step + count) % count;
      this.renderJob();
      ev.preventDefault();
      return;
    }
    if (model.applyKey(this.focusedQuestion, ev.key)) {
      this.renderJob();
      ev.preventDefault();
    }
  }
}

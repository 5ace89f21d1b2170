// DOM wiring: three panels (left reconstruction, original, right
// reconstruction), a synchronized magnifier, forced-choice voting with
// keyboard shortcuts, progress, and a completion screen.

import { StudyApi, type Role, type Side } from "./api.js";
import { SessionState } from "./session.js";
import { ZOOM_LEVELS, type ZoomLevel, lensPlacement } from "./magnifier.js";

const LENS_SIZE = 140;

interface Panel {
  root: HTMLElement;
  img: HTMLImageElement;
  lens: HTMLCanvasElement;
}

function panel(id: string): Panel {
  const root = document.getElementById(id)!;
  return {
    root,
    img: root.querySelector("img")!,
    lens: root.querySelector("canvas")!,
  };
}

function el<T extends HTMLElement>(id: string): T {
  return document.getElementById(id) as T;
}

class StudyView {
  private readonly api: StudyApi;
  private session!: SessionState;
  private readonly panels: Record<Role, Panel>;
  private zoom: ZoomLevel = ZOOM_LEVELS[0];
  private loadedCount = 0;

  constructor(
    private readonly annotator: string,
    private readonly factor: number,
  ) {
    this.api = new StudyApi("");
    this.panels = {
      left: panel("panel-left"),
      original: panel("panel-original"),
      right: panel("panel-right"),
    };
  }

  async start(): Promise<void> {
    const data = await this.api.getSession(this.annotator, this.factor);
    this.session = new SessionState(data);
    el<HTMLElement>("who").textContent = `${this.annotator} — ${this.factor}x`;
    this.bindEvents();
    this.render();
  }

  private bindEvents(): void {
    el<HTMLButtonElement>("vote-left").addEventListener("click", () => this.vote("left"));
    el<HTMLButtonElement>("vote-right").addEventListener("click", () => this.vote("right"));
    el<HTMLButtonElement>("retry").addEventListener("click", () => this.render());
    el<HTMLButtonElement>("zoom").addEventListener("click", () => {
      const next = ZOOM_LEVELS[(ZOOM_LEVELS.indexOf(this.zoom) + 1) % ZOOM_LEVELS.length];
      this.zoom = next;
      el<HTMLButtonElement>("zoom").textContent = `${next}x`;
    });
    document.addEventListener("keydown", (ev) => {
      if (ev.key === "ArrowLeft") this.vote("left");
      if (ev.key === "ArrowRight") this.vote("right");
    });
    for (const role of ["left", "original", "right"] as const) {
      const p = this.panels[role];
      p.root.addEventListener("mousemove", (ev) => this.moveLens(p, ev));
      p.root.addEventListener("mouseleave", () => this.hideLens());
      if (role !== "original") {
        p.root.addEventListener("mouseenter", () => {
          this.session.markViewed(role);
          this.updateControls();
        });
      }
    }
  }

  private render(): void {
    this.setStatus("");
    if (this.session.done) {
      el<HTMLElement>("viewer").hidden = true;
      const doneEl = el<HTMLElement>("done");
      doneEl.hidden = false;
      doneEl.textContent =
        `Session complete: ${this.session.votedCount}/${this.session.total} pairs voted ` +
        `at ${this.factor}x. Thank you.`;
      return;
    }
    const pairId = this.session.currentPairId!;
    this.loadedCount = 0;
    this.setStatus("loading images…");
    for (const role of ["left", "original", "right"] as const) {
      const p = this.panels[role];
      p.img.onload = () => {
        this.loadedCount += 1;
        if (this.loadedCount === 3) {
          this.setStatus("");
          this.updateControls();
        }
      };
      p.img.onerror = () => {
        this.setStatus("image failed to load — press retry");
        el<HTMLButtonElement>("retry").hidden = false;
        this.updateControls();
      };
      p.img.src = this.api.imageUrl(pairId, role, this.annotator);
    }
    this.updateProgress();
    this.updateControls();
  }

  private updateProgress(): void {
    el<HTMLElement>("progress").textContent =
      `${this.session.votedCount}/${this.session.total}`;
  }

  private updateControls(): void {
    const ready = this.loadedCount === 3 && this.session.canVote();
    el<HTMLButtonElement>("vote-left").disabled = !ready;
    el<HTMLButtonElement>("vote-right").disabled = !ready;
  }

  private async vote(side: Side): Promise<void> {
    if (this.loadedCount !== 3) return;
    const outcome = await this.session.submit(side, (pairId, s) =>
      this.api.postVote(this.annotator, this.factor, pairId, s),
    );
    if (outcome === "failed") {
      this.setStatus("vote failed — check the connection and try again");
      return;
    }
    if (outcome === "advanced" || outcome === "completed") {
      el<HTMLButtonElement>("retry").hidden = true;
      this.render();
    }
  }

  private setStatus(text: string): void {
    el<HTMLElement>("status").textContent = text;
  }

  private moveLens(active: Panel, ev: MouseEvent): void {
    const rect = active.img.getBoundingClientRect();
    if (rect.width === 0 || rect.height === 0) return;
    const u = (ev.clientX - rect.left) / rect.width;
    const v = (ev.clientY - rect.top) / rect.height;
    for (const role of ["left", "original", "right"] as const) {
      const p = this.panels[role];
      const r = p.img.getBoundingClientRect();
      const place = lensPlacement(
        u, v,
        p.img.naturalWidth, p.img.naturalHeight,
        r.width, r.height,
        LENS_SIZE, this.zoom,
      );
      const ctx = p.lens.getContext("2d")!;
      p.lens.width = place.size;
      p.lens.height = place.size;
      p.lens.style.left = `${place.lx}px`;
      p.lens.style.top = `${place.ly}px`;
      p.lens.style.display = "block";
      ctx.imageSmoothingEnabled = false;
      ctx.drawImage(p.img, place.sx, place.sy, place.sw, place.sh, 0, 0, place.size, place.size);
    }
  }

  private hideLens(): void {
    for (const role of ["left", "original", "right"] as const) {
      this.panels[role].lens.style.display = "none";
    }
  }
}

const params = new URLSearchParams(window.location.search);
const annotator = params.get("annotator") ?? "";
const factorRaw = params.get("factor") ?? "2";
if (!annotator) {
  document.body.innerHTML =
    "<p class='hint'>Open this page as ?annotator=YOUR_ID&factor=2 (or 4).</p>";
} else {
  new StudyView(annotator, parseInt(factorRaw, 10)).start().catch((err) => {
    document.body.innerHTML = `<p class='hint'>Failed to start session: ${err}</p>`;
  });
}

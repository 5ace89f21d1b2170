// Client for the study service API. The server never names the methods
// behind "left" and "right"; this module only ever sees sides.

export type Side = "left" | "right";
export type Role = "original" | Side;

export interface PairDescriptor {
  pair_id: string;
  index: number;
  voted_side: Side | null;
}

export interface SessionData {
  annotator_id: string;
  factor: number;
  pairs: PairDescriptor[];
}

export class StudyApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: typeof fetch = (...args) => fetch(...args),
  ) {}

  async getSession(annotator: string, factor: number): Promise<SessionData> {
    const url = `${this.baseUrl}/api/session?annotator=${encodeURIComponent(annotator)}&factor=${factor}`;
    const resp = await this.fetchFn(url);
    if (!resp.ok) {
      throw new Error(`session request failed: ${resp.status}`);
    }
    return (await resp.json()) as SessionData;
  }

  imageUrl(pairId: string, role: Role, annotator: string): string {
    const base = `${this.baseUrl}/api/image/${encodeURIComponent(pairId)}/${role}`;
    return role === "original" ? base : `${base}?annotator=${encodeURIComponent(annotator)}`;
  }

  /** Resolves true when the vote was acknowledged (2xx), false otherwise. */
  async postVote(annotator: string, factor: number, pairId: string, side: Side): Promise<boolean> {
    try {
      const resp = await this.fetchFn(`${this.baseUrl}/api/vote`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ annotator_id: annotator, factor, pair_id: pairId, side }),
      });
      return resp.ok;
    } catch {
      return false;
    }
  }
}

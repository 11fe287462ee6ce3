/**
 * Thin client for the fusion saliency service. All network traffic goes
 * through an injectable transport, which keeps the client testable under
 * Node and lets tests assert that an interaction made no requests.
 */

import type {
  BenchResult,
  GuidanceResult,
  HoverResult,
  JobStatus,
  SessionInfo,
} from "./protocol.js";
import { parseHoverMessage } from "./protocol.js";

/** Minimal socket surface shared by browser WebSocket and the ws package. */
export interface SocketLike {
  send(data: string): void;
  close(code?: number, reason?: string): void;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onopen: ((ev: unknown) => void) | null;
  onclose: ((ev: { code?: number; reason?: string }) => void) | null;
  onerror: ((ev: unknown) => void) | null;
}

export interface Transport {
  fetchJson(url: string, init?: { method?: string; body?: unknown }): Promise<unknown>;
  openSocket(url: string): SocketLike;
}

/** Transport backed by the browser's fetch and WebSocket globals. */
export function browserTransport(): Transport {
  return {
    async fetchJson(url, init) {
      const response = await fetch(url, {
        method: init?.method ?? "GET",
        headers: init?.body !== undefined ? { "content-type": "application/json" } : undefined,
        body: init?.body !== undefined ? JSON.stringify(init.body) : undefined,
      });
      const text = await response.text();
      if (!response.ok) {
        throw new Error(`${init?.method ?? "GET"} ${url} failed (${response.status}): ${text}`);
      }
      return text === "" ? null : JSON.parse(text);
    },
    openSocket(url) {
      return new WebSocket(url) as unknown as SocketLike;
    },
  };
}

/** Hover stream wrapper: fire-and-forget requests, parsed messages out. */
export class HoverSocket {
  private socket: SocketLike;
  private opened: Promise<void>;
  private queue: HoverResult[] = [];
  private waiters: Array<(r: HoverResult) => void> = [];
  private handler: ((r: HoverResult) => void) | null = null;
  closeCode: number | null = null;

  constructor(socket: SocketLike) {
    this.socket = socket;
    this.opened = new Promise((resolve, reject) => {
      socket.onopen = () => resolve();
      socket.onerror = (ev) => reject(ev instanceof Error ? ev : new Error("socket error"));
    });
    socket.onmessage = (ev) => {
      this.dispatch(parseHoverMessage(String(ev.data)));
    };
    socket.onclose = (ev) => {
      this.closeCode = ev?.code ?? null;
    };
  }

  private dispatch(result: HoverResult): void {
    if (this.handler !== null) {
      this.handler(result);
      return;
    }
    const waiter = this.waiters.shift();
    if (waiter !== undefined) {
      waiter(result);
    } else {
      this.queue.push(result);
    }
  }

  /** Resolves once the socket is open and requests can be sent. */
  ready(): Promise<void> {
    return this.opened;
  }

  /** Ask for the Jacobian frame of one pixel; latest request wins. */
  request(pixel: number): void {
    this.socket.send(JSON.stringify({ pixel }));
  }

  /** Route all messages to a callback (app mode). */
  onMessage(handler: (result: HoverResult) => void): void {
    this.handler = handler;
    for (const queued of this.queue.splice(0)) {
      handler(queued);
    }
  }

  /** Await the next message (test and scripting mode). */
  next(): Promise<HoverResult> {
    const queued = this.queue.shift();
    if (queued !== undefined) {
      return Promise.resolve(queued);
    }
    return new Promise((resolve) => this.waiters.push(resolve));
  }

  close(): void {
    this.socket.close();
  }
}

export class ServiceClient {
  readonly baseUrl: string;
  private transport: Transport;

  constructor(baseUrl: string, transport: Transport = browserTransport()) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.transport = transport;
  }

  private get wsBase(): string {
    return this.baseUrl.replace(/^http/, "ws");
  }

  async models(): Promise<string[]> {
    const out = (await this.transport.fetchJson(`${this.baseUrl}/models`)) as {
      models: string[];
    };
    return out.models;
  }

  async pairs(): Promise<string[]> {
    const out = (await this.transport.fetchJson(`${this.baseUrl}/pairs`)) as {
      pairs: string[];
    };
    return out.pairs;
  }

  createSession(model: string, pair: string): Promise<SessionInfo> {
    return this.transport.fetchJson(`${this.baseUrl}/sessions`, {
      method: "POST",
      body: { model, pair },
    }) as Promise<SessionInfo>;
  }

  setDisplay(
    session: string,
    gammas: { gamma_corr1?: number; gamma_corr2?: number },
  ): Promise<unknown> {
    return this.transport.fetchJson(`${this.baseUrl}/sessions/${session}/display`, {
      method: "POST",
      body: gammas,
    });
  }

  openHover(session: string): HoverSocket {
    return new HoverSocket(this.transport.openSocket(`${this.wsBase}/sessions/${session}/hover`));
  }

  startGuidance(session: string): Promise<{ job: string; status: string }> {
    return this.transport.fetchJson(`${this.baseUrl}/sessions/${session}/guidance`, {
      method: "POST",
    }) as Promise<{ job: string; status: string }>;
  }

  jobStatus(job: string): Promise<JobStatus> {
    return this.transport.fetchJson(`${this.baseUrl}/jobs/${job}`) as Promise<JobStatus>;
  }

  cancelJob(job: string): Promise<unknown> {
    return this.transport.fetchJson(`${this.baseUrl}/jobs/${job}`, { method: "DELETE" });
  }

  guidance(session: string): Promise<GuidanceResult> {
    return this.transport.fetchJson(
      `${this.baseUrl}/sessions/${session}/guidance`,
    ) as Promise<GuidanceResult>;
  }

  bench(session: string, hovers: number): Promise<BenchResult> {
    return this.transport.fetchJson(`${this.baseUrl}/sessions/${session}/bench`, {
      method: "POST",
      body: { hovers },
    }) as Promise<BenchResult>;
  }

  exportUrl(session: string, artifact: string, pixel?: number): string {
    const suffix = pixel !== undefined ? `?pixel=${pixel}` : "";
    return `${this.baseUrl}/sessions/${session}/export/${artifact}${suffix}`;
  }
}

import { ApiClient, ServiceError } from "./api.js";
import { Choice, choiceToB, QueryView, SessionRow } from "./types.js";
import { renderDashboard, renderQueryView } from "./views.js";

/**
 * Single-page controller. State lives here; views are stateless render
 * calls. One mutating request may be in flight at a time (the `busy`
 * flag doubles as the double-click guard), and a 1 s poll keeps the
 * current page fresh between interactions.
 */
export class App {
  private view: QueryView | null = null;
  private rows: SessionRow[] | null = null;
  private busy = false;
  private polling = false;
  private error?: string;
  private formError?: string;
  private offline?: string;
  private timer: ReturnType<typeof setInterval> | null = null;

  /** Resolves when the most recently started load/mutation settles (test hook). */
  lastOp: Promise<void> = Promise.resolve();

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
    private pollMs = 1000,
  ) {}

  start(): void {
    window.addEventListener("hashchange", this.handleHashChange);
    this.route();
    this.timer = setInterval(() => void this.poll(), this.pollMs);
  }

  stop(): void {
    window.removeEventListener("hashchange", this.handleHashChange);
    if (this.timer !== null) clearInterval(this.timer);
    this.timer = null;
  }

  private handleHashChange = (): void => {
    this.route();
  };

  private sessionId(): string | null {
    const m = /^#\/session\/([0-9a-f-]+)$/.exec(window.location.hash);
    return m ? m[1] : null;
  }

  private track(op: Promise<void>): Promise<void> {
    this.lastOp = op;
    return op;
  }

  route(): void {
    const id = this.sessionId();
    if (id !== null) {
      if (this.view === null || this.view.id !== id) {
        this.view = null;
        this.error = undefined;
        void this.track(this.loadSession(id));
      } else {
        this.render();
      }
    } else {
      this.view = null;
      void this.track(this.loadDashboard());
    }
  }

  private async loadDashboard(): Promise<void> {
    try {
      const list = await this.api.listSessions();
      this.rows = list.sessions;
      this.offline = undefined;
    } catch (err) {
      this.rows = this.rows ?? null;
      this.offline = err instanceof Error ? err.message : String(err);
    }
    this.render();
  }

  private async loadSession(id: string): Promise<void> {
    try {
      this.view = await this.api.getQuery(id);
      this.error = undefined;
    } catch (err) {
      this.error = err instanceof Error ? err.message : String(err);
    }
    this.render();
  }

  private async poll(): Promise<void> {
    if (this.busy || this.polling) return;
    this.polling = true;
    try {
      const id = this.sessionId();
      if (id !== null) {
        const fresh = await this.api.getQuery(id);
        if (this.busy) return; // a click won the race; its response renders
        if (JSON.stringify(fresh) !== JSON.stringify(this.view)) {
          this.view = fresh;
          this.render();
        }
      } else {
        const list = await this.api.listSessions();
        if (JSON.stringify(list.sessions) !== JSON.stringify(this.rows) || this.offline) {
          this.rows = list.sessions;
          this.offline = undefined;
          this.render();
        }
      }
    } catch {
      // transient poll failures keep the last good view; the next user
      // action surfaces the error through its own handler
    } finally {
      this.polling = false;
    }
  }

  private choose(choice: Choice): void {
    if (this.busy || this.view === null || this.view.type !== "query") return;
    const id = this.view.id;
    this.busy = true;
    this.error = undefined;
    this.render();
    void this.track((async () => {
      try {
        this.view = await this.api.submitPreference(id, choiceToB(choice));
      } catch (err) {
        // the displayed query survives; banner offers a retry
        this.error = err instanceof Error ? err.message : String(err);
      } finally {
        this.busy = false;
        this.render();
      }
    })());
  }

  private create(scenario: string, config: Record<string, unknown>): void {
    if (this.busy) return;
    this.busy = true;
    this.formError = undefined;
    this.render();
    void this.track((async () => {
      try {
        const view = await this.api.createSession(scenario, config);
        this.view = view;
        this.busy = false;
        window.location.hash = `#/session/${view.id}`;
        this.render();
      } catch (err) {
        this.busy = false;
        if (err instanceof ServiceError && err.status === 0) {
          this.offline = err.message;
        } else {
          this.formError = err instanceof Error ? err.message : String(err);
        }
        this.render();
      }
    })());
  }

  render(): void {
    const id = this.sessionId();
    if (id !== null) {
      if (this.view === null) {
        this.root.replaceChildren(
          document.createTextNode(this.error ? `failed to load session: ${this.error}` : "loading…"),
        );
        return;
      }
      renderQueryView(
        this.root,
        this.view,
        { busy: this.busy, error: this.error },
        { onChoice: (c) => this.choose(c) },
        { exportUrl: (format) => this.api.exportUrl(id, format) },
      );
    } else {
      renderDashboard(
        this.root,
        { rows: this.rows, offline: this.offline, formError: this.formError, busy: this.busy },
        {
          onCreate: (scenario, config) => this.create(scenario, config),
          onOpen: (sid) => {
            window.location.hash = `#/session/${sid}`;
          },
          exportUrl: (sid, format) => this.api.exportUrl(sid, format),
        },
      );
    }
  }
}

// Boot only when the host page provides the mount point; test imports don't.
const mount = typeof document !== "undefined" ? document.getElementById("app") : null;
if (mount !== null) {
  new App(mount, new ApiClient()).start();
}

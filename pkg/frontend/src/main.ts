/** Bootstrap: resume a session from the URL, or show the operator connect form.
 *
 * Evaluators receive a link like ``/?session=<id>``; creating sessions (which
 * requires naming the paired configurations) is operator work and lives
 * behind the connect form.
 */

import { EvalApi } from "./api.js";
import { EvalStation } from "./app.js";

function param(name: string): string | null {
  return new URLSearchParams(window.location.search).get(name);
}

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) return;
  const base = param("base") ?? "";
  const token = param("token") ?? window.localStorage.getItem("ragforge_token");
  const api = new EvalApi(base, token);

  const sessionId = param("session");
  if (sessionId) {
    const station = new EvalStation(api, sessionId, root);
    await station.start();
    return;
  }
  renderConnectForm(root, api);
}

function renderConnectForm(root: HTMLElement, api: EvalApi): void {
  root.textContent = "";
  const form = document.createElement("form");
  form.className = "connect";
  form.innerHTML = `
    <h1>Start an evaluation session</h1>
    <p class="note">Operator-facing: evaluators should open a ?session=… link instead.</p>
    <label>Run id <input name="run" required></label>
    <label>Evaluator id <input name="evaluator" required></label>
    <label>Configuration A <input name="a" required></label>
    <label>Configuration B <input name="b" required></label>
    <label>Blinding seed <input name="seed" type="number" value="42" required></label>
    <button type="submit">Create session</button>
    <p class="error-text" id="connect-error"></p>
  `;
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const data = new FormData(form);
    void api
      .createSession(
        String(data.get("run")),
        String(data.get("evaluator")),
        [String(data.get("a")), String(data.get("b"))],
        Number(data.get("seed")),
      )
      .then((session) => {
        const target = new URL(window.location.href);
        target.searchParams.set("session", session.session_id);
        window.location.assign(target.toString());
      })
      .catch((error) => {
        const slot = form.querySelector("#connect-error");
        if (slot) slot.textContent = String(error);
      });
  });
  root.appendChild(form);
}

void boot();

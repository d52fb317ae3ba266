import { AdminClient } from "./api.js";
import { AdminConsole } from "./console.js";

/**
 * Browser bootstrap. Connection settings come from the URL:
 *   index.html#/http://gateway-host:8081/v1
 * and the admin token from a prompt (kept in sessionStorage for the tab).
 */
function connectionSettings(): { base: string; token: string } {
  const fromHash = window.location.hash.replace(/^#\/?/, "");
  const base = fromHash || `${window.location.origin}/v1`;
  let token = window.sessionStorage.getItem("gateway-admin-token") ?? "";
  if (!token) {
    token = window.prompt("admin bearer token") ?? "";
    window.sessionStorage.setItem("gateway-admin-token", token);
  }
  return { base, token };
}

function mount(root: HTMLElement): AdminConsole {
  const { base, token } = connectionSettings();
  const app = new AdminConsole(new AdminClient(base, token));

  const redraw = () => {
    root.innerHTML = app.render();
  };

  root.addEventListener("click", (event) => {
    const target = (event.target as HTMLElement).closest<HTMLElement>("[data-action]");
    if (!target) return;
    const action = target.dataset.action ?? "";
    const dataset: Record<string, string | undefined> = { ...target.dataset };
    if (action === "policy-upload") {
      dataset.document = (root.querySelector("#policy-doc") as HTMLTextAreaElement | null)?.value;
    }
    void app.handleAction(action, dataset).then(redraw);
  });

  const tick = app.tick.bind(app);
  app.tick = async () => {
    await tick();
    redraw();
  };
  app.start();
  void app.policy.load().then(redraw);
  redraw();
  return app;
}

const rootElement = document.getElementById("app");
if (rootElement) mount(rootElement);

export { mount };

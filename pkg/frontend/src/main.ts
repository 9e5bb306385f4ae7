import { ApiClient } from "./api.js";
import { AuthorController } from "./author.js";
import { clear, el } from "./dom.js";
import { WizardController } from "./wizard.js";

/** App shell: model picker plus the Author / Troubleshoot views. */
export function boot(root: HTMLElement, api = new ApiClient()): void {
  const nav = el("nav", {});
  const modelSelect = el("select", { "data-role": "model-picker" }) as HTMLSelectElement;
  const authorButton = el("button", {}, "Author");
  const wizardButton = el("button", {}, "Troubleshoot");
  nav.append(modelSelect, authorButton, wizardButton);

  const view = el("main", {});
  root.append(nav, view);

  const author = new AuthorController(api, view);
  const wizard = new WizardController(api, view);

  async function refreshModels(): Promise<void> {
    const { models } = await api.listModels();
    clear(modelSelect);
    for (const model of models) {
      modelSelect.append(el("option", { value: model.id }, model.name));
    }
  }

  authorButton.addEventListener("click", () => {
    if (modelSelect.value) void author.load(modelSelect.value);
  });
  wizardButton.addEventListener("click", () => {
    if (modelSelect.value) void wizard.start(modelSelect.value);
  });

  void refreshModels();
}

declare global {
  interface Window {
    batsBoot?: typeof boot;
  }
}

if (typeof window !== "undefined") {
  window.batsBoot = boot;
  const mount = document.getElementById("app");
  if (mount) boot(mount);
}

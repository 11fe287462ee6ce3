export * from "./protocol.js";
export * from "./gamma.js";
export * from "./geometry.js";
export * from "./state.js";
export * from "./composite.js";
export * from "./scatter.js";
export * from "./client.js";
export * from "./panes.js";
export { App, startApp } from "./app.js";
